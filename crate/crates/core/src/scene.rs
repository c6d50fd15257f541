//! Object transmittances and the diffraction patterns a reconstruction converges to.

use std::f64::consts::{PI, TAU};
use std::io::BufRead;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealPattern};
use crate::grid::Grid;

/// Real amplitude transmittance in `[0, 1]` on the object plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMask {
    grid: Grid,
    samples: Vec<f64>,
}

impl TransmissionMask {
    pub fn new(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} mask samples for a grid of {}",
                samples.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = samples.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "transmittance {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(TransmissionMask { grid, samples })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// Reads one transmittance per line. Blank lines and `#` comments are skipped.
    pub fn from_text<R: BufRead>(reader: R, grid: Grid) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.len());
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: f64 = t.parse().map_err(|_| {
                Error::InvalidArgument(format!("mask line {}: cannot parse {t:?}", lineno + 1))
            })?;
            samples.push(v);
        }
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Two slits of width `a` centered at `±b/2`. Edges are inclusive.
pub fn double_slit(a: f64, b: f64, grid: &Grid) -> Result<TransmissionMask> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("slit width must be positive, got {a}")));
    }
    if !(b > a) {
        return Err(Error::InvalidArgument(format!(
            "slits overlap: separation {b:e} m must exceed width {a:e} m"
        )));
    }
    if grid.dims() != 1 {
        return Err(Error::InvalidArgument("double slit masks are one-dimensional".into()));
    }
    let half = a / 2.0;
    let samples = grid
        .x
        .coordinates()
        .into_iter()
        .map(|x| {
            if (x + b / 2.0).abs() <= half || (x - b / 2.0).abs() <= half {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    TransmissionMask::new(*grid, samples)
}

/// A single slit of width `a` centered at 0.
pub fn single_slit(a: f64, grid: &Grid) -> Result<TransmissionMask> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("slit width must be positive, got {a}")));
    }
    let samples = grid
        .x
        .coordinates()
        .into_iter()
        .map(|x| if x.abs() <= a / 2.0 { 1.0 } else { 0.0 })
        .collect();
    TransmissionMask::new(*grid, samples)
}

pub fn apply_mask(field: &ComplexField, mask: &TransmissionMask) -> Result<ComplexField> {
    field.grid().ensure_matches(&mask.grid, "field vs mask")?;
    let samples = field
        .samples()
        .iter()
        .zip(&mask.samples)
        .map(|(e, t)| e * t)
        .collect();
    Ok(ComplexField::from_parts_unchecked(*field.grid(), samples, field.wavelength()))
}

/// `sin(πu) / (πu)`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        let v = PI * u;
        v.sin() / v
    }
}

/// Closed-form double-slit ghost diffraction pattern,
/// `½ sinc²(a ρ/(λ d2)) (1 + cos(2π b ρ/(λ d2)))`, which peaks at 1 at `ρ = 0`.
pub fn reference_double_slit(a: f64, b: f64, wavelength: f64, d2: f64, grid: &Grid) -> Result<RealPattern> {
    for (name, v) in [("a", a), ("b", b), ("wavelength", wavelength), ("d2", d2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let scale = 1.0 / (wavelength * d2);
    RealPattern::from_fn(*grid, |x, _| {
        let s = sinc(a * x * scale);
        0.5 * s * s * (1.0 + (TAU * b * x * scale).cos())
    })
}

/// `|T(ρ/(λ d2))|²` of an arbitrary mask by direct Fourier quadrature, scaled to peak 1.
pub fn reference_from_mask(mask: &TransmissionMask, wavelength: f64, d2: f64, grid: &Grid) -> Result<RealPattern> {
    if !(wavelength > 0.0 && d2 > 0.0) {
        return Err(Error::InvalidArgument("wavelength and d2 must be positive".into()));
    }
    let xs = mask.grid.x.coordinates();
    let dx = mask.grid.x.pitch;
    let support: Vec<(f64, f64)> = xs
        .into_iter()
        .zip(mask.samples.iter().copied())
        .filter(|&(_, t)| t != 0.0)
        .collect();
    let mut values: Vec<f64> = grid
        .x
        .coordinates()
        .into_iter()
        .map(|rho| {
            let xi = rho / (wavelength * d2);
            let t: Complex64 = support
                .iter()
                .map(|&(x, t)| Complex64::cis(-TAU * x * xi) * t)
                .sum();
            (t * dx).norm_sqr()
        })
        .collect();
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut values {
            *v /= peak;
        }
    }
    RealPattern::new(*grid, values)
}
