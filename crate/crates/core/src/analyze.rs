//! Convergence metrics: min-max normalization, root-mean error over an index
//! window and its low/high band split, coherence length and κ, half widths,
//! and the minimal-N threshold search.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealPattern;

/// Inclusive index window `m..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub m: usize,
    pub n: usize,
}

impl Window {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m > n {
            return Err(Error::InvalidRange { m, n });
        }
        Ok(Window { m, n })
    }

    pub fn full(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidRange { m: 0, n: 0 });
        }
        Ok(Window { m: 0, n: len - 1 })
    }

    pub fn len(&self) -> usize {
        self.n - self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> RangeInclusive<usize> {
        self.m..=self.n
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.m > self.n || self.n >= len {
            Err(Error::InvalidRange { m: self.m, n: self.n })
        } else {
            Ok(())
        }
    }
}

/// `(v - min) / (max - min)` over the window; returns only the windowed values.
pub fn normalize_unit(values: &[f64], window: Window) -> Result<Vec<f64>> {
    window.check(values.len())?;
    let w = &values[window.range()];
    let (lo, hi) = w
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::DegeneratePattern);
    }
    let span = hi - lo;
    Ok(w.iter().map(|v| (v - lo) / span).collect())
}

pub fn normalize_pattern(pattern: &RealPattern, window: Window) -> Result<Vec<f64>> {
    normalize_unit(pattern.samples(), window)
}

/// Root-mean error between `y_hat` and `y` over indices `m..=n`.
pub fn rms_error(y_hat: &[f64], y: &[f64], m: usize, n: usize) -> Result<f64> {
    let w = Window::new(m, n)?;
    w.check(y_hat.len().min(y.len()))?;
    Ok(rms_over(y_hat, y, w.range()))
}

fn sum_sq(y_hat: &[f64], y: &[f64], idx: impl IntoIterator<Item = usize>) -> (f64, usize) {
    idx.into_iter().fold((0.0, 0), |(s, c), i| {
        let d = y_hat[i] - y[i];
        (s + d * d, c + 1)
    })
}

fn rms_over(y_hat: &[f64], y: &[f64], idx: impl IntoIterator<Item = usize>) -> f64 {
    let (s, c) = sum_sq(y_hat, y, idx);
    (s / c as f64).sqrt()
}

/// Central third of a window (low spatial frequencies) and the two outer thirds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandSplit {
    pub low: RangeInclusive<usize>,
    pub high: Vec<usize>,
}

impl BandSplit {
    pub fn low_len(&self) -> usize {
        self.low.clone().count()
    }
}

/// Splits `window` (within a pattern of `len` samples) into a centered low band of
/// `⌊L/3⌋` samples starting at offset `⌈(L - ⌊L/3⌋)/2⌉` and the remaining high band.
pub fn split_bands(len: usize, window: Window) -> Result<BandSplit> {
    window.check(len)?;
    let l = window.len();
    if l < 3 {
        return Err(Error::WindowTooSmall { len: l });
    }
    let low_len = l / 3;
    let offset = (l - low_len).div_ceil(2);
    let start = window.m + offset;
    let low = start..=start + low_len - 1;
    let high = window.range().filter(|i| !low.contains(i)).collect();
    Ok(BandSplit { low, high })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandErrors {
    pub global: f64,
    pub low: f64,
    pub high: f64,
}

/// Global, low-band and high-band root-mean errors for patterns indexed like `split`.
pub fn band_errors(y_hat: &[f64], y: &[f64], window: Window, split: &BandSplit) -> BandErrors {
    BandErrors {
        global: rms_over(y_hat, y, window.range()),
        low: rms_over(y_hat, y, split.low.clone()),
        high: rms_over(y_hat, y, split.high.iter().copied()),
    }
}

/// Van Cittert–Zernike coherence length `λ z / φ` at distance `z` from a source of width `φ`.
pub fn coherence_length(wavelength: f64, distance: f64, aperture_diameter: f64) -> f64 {
    wavelength * distance / aperture_diameter
}

/// Feature size relative to the coherence length.
pub fn kappa(feature_size: f64, coherence_length: f64) -> f64 {
    feature_size / coherence_length
}

/// Full width at half maximum in meters, by linear interpolation of the innermost
/// half-maximum crossings on each side of the global maximum.
pub fn half_width(pattern: &RealPattern) -> Result<f64> {
    let v = pattern.samples();
    let pitch = pattern.grid().x.pitch;
    if pattern.grid().dims() != 1 {
        return Err(Error::InvalidArgument("half_width expects a 1D pattern".into()));
    }
    let (peak, max) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) });
    if v.iter().all(|&x| x == max) {
        return Err(Error::NoPeak("pattern is constant".into()));
    }
    if peak == 0 || peak == v.len() - 1 {
        return Err(Error::NoPeak("maximum lies on the window edge".into()));
    }
    let half = max / 2.0;
    let left = (0..peak)
        .rev()
        .find(|&j| v[j] <= half)
        .map(|j| (j + 1) as f64 - (v[j + 1] - half) / (v[j + 1] - v[j]))
        .ok_or_else(|| Error::NoPeak("no half-maximum crossing left of the peak".into()))?;
    let right = (peak + 1..v.len())
        .find(|&j| v[j] <= half)
        .map(|j| (j - 1) as f64 + (v[j - 1] - half) / (v[j - 1] - v[j]))
        .ok_or_else(|| Error::NoPeak("no half-maximum crossing right of the peak".into()))?;
    Ok((right - left) * pitch)
}

/// Indices of strict local maxima (`v[i-1] < v[i] >= v[i+1]`).
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .collect()
}

/// Sub-sample vertex of a least-squares parabola through `v[c-h..=c+h]`.
/// Returns `None` if the fit is not concave or the window leaves the slice.
pub fn parabolic_peak(v: &[f64], center: usize, half_window: usize) -> Option<f64> {
    let lo = center.checked_sub(half_window)?;
    let hi = center + half_window;
    if hi >= v.len() {
        return None;
    }
    // Fit in centered coordinates t = i - center.
    let (mut s0, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut y0, mut y1, mut y2) = (0.0, 0.0, 0.0);
    for (i, &y) in v.iter().enumerate().take(hi + 1).skip(lo) {
        let t = i as f64 - center as f64;
        let t2 = t * t;
        s0 += 1.0;
        s1 += t;
        s2 += t2;
        s3 += t2 * t;
        s4 += t2 * t2;
        y0 += y;
        y1 += t * y;
        y2 += t2 * y;
    }
    // Normal equations for y = c0 + c1 t + c2 t^2 solved by Cramer's rule.
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let a = [[s0, s1, s2], [s1, s2, s3], [s2, s3, s4]];
    let d = det(a);
    if d == 0.0 {
        return None;
    }
    let c1 = det([[s0, y0, s2], [s1, y1, s3], [s2, y2, s4]]) / d;
    let c2 = det([[s0, s1, y0], [s1, s2, y1], [s2, s3, y2]]) / d;
    if !(c2 < 0.0) {
        return None;
    }
    Some(center as f64 - c1 / (2.0 * c2))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length samples of size >= 2".into()));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegeneratePattern);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Root-mean errors of the normalized reconstruction after `n` realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub eps_global: f64,
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Checkpoint {
    pub fn from_errors(n: u64, e: BandErrors) -> Self {
        Checkpoint {
            n,
            eps_global: e.global,
            eps_low: e.low,
            eps_high: e.high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub checkpoints: Vec<Checkpoint>,
    pub config_hash: String,
}

impl ConvergenceCurve {
    pub fn new(config_hash: impl Into<String>) -> Self {
        ConvergenceCurve {
            checkpoints: Vec::new(),
            config_hash: config_hash.into(),
        }
    }

    pub fn push(&mut self, c: Checkpoint) -> Result<()> {
        if let Some(last) = self.checkpoints.last() {
            if c.n <= last.n {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint N must increase: {} after {}",
                    c.n, last.n
                )));
            }
        }
        self.checkpoints.push(c);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ThresholdOutcome {
    /// First scheduled N with `eps_global <= tau`. `stable` tells whether the next
    /// checkpoint also satisfied the threshold (`None` if there was none).
    Reached { n_star: u64, at: Checkpoint, stable: Option<bool> },
    NotReached { n_max: u64, last: Option<Checkpoint> },
}

impl ThresholdOutcome {
    pub fn n_star(&self) -> Option<u64> {
        match self {
            ThresholdOutcome::Reached { n_star, .. } => Some(*n_star),
            ThresholdOutcome::NotReached { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub outcome: ThresholdOutcome,
    pub checkpoints: Vec<Checkpoint>,
}

/// Consumes checkpoints in schedule order until the global error first falls to
/// `tau` (plus one more to judge stability) or the schedule passes `n_max`.
/// The runner is lazy, so realizations past the decision are never simulated.
pub fn min_n_to_threshold<I>(checkpoints: I, tau: f64, n_max: u64) -> Result<ThresholdSearch>
where
    I: IntoIterator<Item = Result<Checkpoint>>,
{
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {tau}")));
    }
    let mut seen: Vec<Checkpoint> = Vec::new();
    let mut hit: Option<Checkpoint> = None;
    for c in checkpoints {
        let c = c?;
        if let Some(last) = seen.last() {
            if c.n <= last.n {
                return Err(Error::InvalidArgument("checkpoint schedule must be strictly increasing".into()));
            }
        }
        if c.n > n_max {
            break;
        }
        seen.push(c);
        if let Some(at) = hit {
            return Ok(ThresholdSearch {
                outcome: ThresholdOutcome::Reached {
                    n_star: at.n,
                    at,
                    stable: Some(c.eps_global <= tau),
                },
                checkpoints: seen,
            });
        }
        if c.eps_global <= tau {
            hit = Some(c);
        }
    }
    let outcome = match hit {
        Some(at) => ThresholdOutcome::Reached {
            n_star: at.n,
            at,
            stable: None,
        },
        None => ThresholdOutcome::NotReached {
            n_max,
            last: seen.last().copied(),
        },
    };
    Ok(ThresholdSearch {
        outcome,
        checkpoints: seen,
    })
}
