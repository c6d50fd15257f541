//! One-pass, mergeable estimators of the intensity-fluctuation correlation
//! `G = <I1 I2> - <I1><I2>` and of the normalized coherence map.
//!
//! Sums are carried with Neumaier compensation so that runs of 10^6 updates
//! agree with a two-pass evaluation to ~1e-12. Merging adds the running sums
//! and the compensation terms separately; it is commutative bit-for-bit.

use crate::error::{Error, Result};
use crate::field::RealPattern;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Compensated {
    sum: f64,
    comp: f64,
}

#[inline]
fn two_sum_err(a: f64, b: f64, t: f64) -> f64 {
    if a.abs() >= b.abs() {
        (a - t) + b
    } else {
        (b - t) + a
    }
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.comp += two_sum_err(self.sum, x, t);
        self.sum = t;
    }

    fn merge(&mut self, other: &Compensated) {
        let t = self.sum + other.sum;
        let err = two_sum_err(self.sum, other.sum, t);
        self.comp = (self.comp + other.comp) + err;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[inline]
fn add_slice(sum: &mut [f64], comp: &mut [f64], xs: impl Iterator<Item = f64>) {
    for ((s, c), x) in sum.iter_mut().zip(comp.iter_mut()).zip(xs) {
        let t = *s + x;
        *c += two_sum_err(*s, x, t);
        *s = t;
    }
}

fn merge_slice(sum: &mut [f64], comp: &mut [f64], osum: &[f64], ocomp: &[f64]) {
    for (((s, c), os), oc) in sum.iter_mut().zip(comp.iter_mut()).zip(osum).zip(ocomp) {
        let t = *s + os;
        let err = two_sum_err(*s, *os, t);
        *c = (*c + oc) + err;
        *s = t;
    }
}

/// Running sums `n`, `Σ I1`, `Σ I2[i]` and `Σ I1 I2[i]` over a detector grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    grid: Grid,
    count: u64,
    s1: Compensated,
    s2_sum: Vec<f64>,
    s2_comp: Vec<f64>,
    s12_sum: Vec<f64>,
    s12_comp: Vec<f64>,
}

/// Plain totals of an accumulator, sufficient to resume or finalize it.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorSnapshot {
    pub grid: Grid,
    pub count: u64,
    pub s1: f64,
    pub s2: Vec<f64>,
    pub s12: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        CorrelationAccumulator {
            grid,
            count: 0,
            s1: Compensated::default(),
            s2_sum: vec![0.0; n],
            s2_comp: vec![0.0; n],
            s12_sum: vec![0.0; n],
            s12_comp: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, i1: f64, i2: &RealPattern) -> Result<()> {
        self.grid.ensure_matches(i2.grid(), "intensity pattern vs accumulator")?;
        self.update_raw(i1, i2.samples())
    }

    /// Like [`update`](Self::update) for a bare slice laid out on the accumulator grid.
    pub fn update_raw(&mut self, i1: f64, i2: &[f64]) -> Result<()> {
        if i2.len() != self.s2_sum.len() {
            return Err(Error::GridMismatch(format!(
                "{} intensities for a {}-sample accumulator",
                i2.len(),
                self.s2_sum.len()
            )));
        }
        if !(i1 >= 0.0) || !i1.is_finite() {
            return Err(Error::NegativeIntensity { index: 0, value: i1 });
        }
        if let Some((index, &value)) = i2.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::NegativeIntensity { index, value });
        }
        self.count += 1;
        self.s1.add(i1);
        add_slice(&mut self.s2_sum, &mut self.s2_comp, i2.iter().copied());
        add_slice(&mut self.s12_sum, &mut self.s12_comp, i2.iter().map(|v| i1 * v));
        Ok(())
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        self.grid.ensure_matches(&other.grid, "accumulator merge")?;
        self.count += other.count;
        self.s1.merge(&other.s1);
        merge_slice(&mut self.s2_sum, &mut self.s2_comp, &other.s2_sum, &other.s2_comp);
        merge_slice(&mut self.s12_sum, &mut self.s12_comp, &other.s12_sum, &other.s12_comp);
        Ok(())
    }

    pub fn merged(a: &CorrelationAccumulator, b: &CorrelationAccumulator) -> Result<CorrelationAccumulator> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    pub fn s1(&self) -> f64 {
        self.s1.value()
    }

    pub fn s2(&self) -> Vec<f64> {
        self.s2_sum.iter().zip(&self.s2_comp).map(|(s, c)| s + c).collect()
    }

    pub fn s12(&self) -> Vec<f64> {
        self.s12_sum.iter().zip(&self.s12_comp).map(|(s, c)| s + c).collect()
    }

    /// `G[i] = Σ I1 I2[i] / n - Σ I1 Σ I2[i] / n²`, with no Bessel correction.
    pub fn finalize(&self) -> Result<RealPattern> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                have: self.count,
            });
        }
        let n = self.count as f64;
        let s1 = self.s1();
        let g = self
            .s12()
            .into_iter()
            .zip(self.s2())
            .map(|(s12, s2)| s12 / n - s1 * s2 / (n * n))
            .collect();
        RealPattern::new(self.grid, g)
    }

    /// Mean of the spatially resolved channel, `Σ I2 / n`.
    pub fn mean_i2(&self) -> Result<RealPattern> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, have: 0 });
        }
        let n = self.count as f64;
        RealPattern::new(self.grid, self.s2().into_iter().map(|v| v / n).collect())
    }

    pub fn snapshot(&self) -> AccumulatorSnapshot {
        AccumulatorSnapshot {
            grid: self.grid,
            count: self.count,
            s1: self.s1(),
            s2: self.s2(),
            s12: self.s12(),
        }
    }

    pub fn from_snapshot(snap: &AccumulatorSnapshot) -> Result<Self> {
        let n = snap.grid.len();
        if snap.s2.len() != n || snap.s12.len() != n {
            return Err(Error::GridMismatch("snapshot sums do not match the grid".into()));
        }
        Ok(CorrelationAccumulator {
            grid: snap.grid,
            count: snap.count,
            s1: Compensated { sum: snap.s1, comp: 0.0 },
            s2_sum: snap.s2.clone(),
            s2_comp: vec![0.0; n],
            s12_sum: snap.s12.clone(),
            s12_comp: vec![0.0; n],
        })
    }
}

/// Normalized second-order coherence relative to the scalar channel:
/// `G[i] / (Σ I1 Σ I2[i] / n²)`. The scalar channel is expected to be the
/// intensity at the reference pixel.
pub fn coherence_map(acc: &CorrelationAccumulator) -> Result<RealPattern> {
    let g = acc.finalize()?;
    let n = acc.count() as f64;
    let s1 = acc.s1();
    if s1 == 0.0 {
        return Err(Error::DivisionByZero("mean intensity at the reference pixel is 0".into()));
    }
    let s2 = acc.s2();
    let mut out = Vec::with_capacity(s2.len());
    for (i, (gi, s2i)) in g.samples().iter().zip(&s2).enumerate() {
        if *s2i == 0.0 {
            return Err(Error::DivisionByZero(format!("mean intensity at pixel {i} is 0")));
        }
        out.push(gi / (s1 * s2i / (n * n)));
    }
    RealPattern::new(*acc.grid(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g1() -> Grid {
        Grid::new_1d(2, 1.0).unwrap()
    }

    fn single(v: f64) -> Vec<f64> {
        vec![v, 0.0]
    }

    #[test]
    fn empty_accumulator() {
        let acc = CorrelationAccumulator::new(g1());
        assert!(matches!(acc.finalize(), Err(Error::InsufficientSamples { .. })));
        let m = CorrelationAccumulator::merged(&acc, &acc).unwrap();
        assert_eq!(m, acc);
        let mut acc = acc;
        acc.update_raw(1.0, &single(1.0)).unwrap();
        assert_eq!(acc.count(), 1);
        assert!(acc.finalize().is_err());
    }

    #[test]
    fn dark_bucket_leaves_cross_sum() {
        let mut acc = CorrelationAccumulator::new(g1());
        acc.update_raw(0.0, &single(5.0)).unwrap();
        assert_eq!(acc.s12()[0], 0.0);
        assert_eq!(acc.s2()[0], 5.0);
    }

    #[test]
    fn hand_arithmetic() {
        let mut acc = CorrelationAccumulator::new(g1());
        acc.update_raw(1.0, &single(2.0)).unwrap();
        acc.update_raw(3.0, &single(4.0)).unwrap();
        assert_eq!(acc.s1(), 4.0);
        assert_eq!(acc.s2()[0], 6.0);
        assert_eq!(acc.s12()[0], 14.0);
        assert_eq!(acc.finalize().unwrap().samples()[0], 1.0);
    }

    #[test]
    fn no_fluctuation_gives_zero() {
        let mut acc = CorrelationAccumulator::new(g1());
        for _ in 0..7 {
            acc.update_raw(1.5, &[2.5, 0.25]).unwrap();
        }
        assert!(acc.finalize().unwrap().samples().iter().all(|v| v.abs() < 1e-15));

        let mut acc = CorrelationAccumulator::new(g1());
        for k in 0..20 {
            acc.update_raw(3.0, &[k as f64, (k * k) as f64]).unwrap();
        }
        assert!(acc.finalize().unwrap().samples().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_level_variance() {
        let mut acc = CorrelationAccumulator::new(g1());
        for k in 0..10 {
            let v = if k % 2 == 0 { 0.0 } else { 2.0 };
            acc.update_raw(v, &single(v)).unwrap();
        }
        assert_eq!(acc.finalize().unwrap().samples()[0], 1.0);
    }

    #[test]
    fn rejects_bad_updates() {
        let mut acc = CorrelationAccumulator::new(g1());
        assert!(matches!(acc.update_raw(-1.0, &single(1.0)), Err(Error::NegativeIntensity { .. })));
        assert!(matches!(acc.update_raw(1.0, &[1.0, -0.5]), Err(Error::NegativeIntensity { index: 1, .. })));
        assert!(matches!(acc.update_raw(1.0, &[1.0]), Err(Error::GridMismatch(_))));
        let other = CorrelationAccumulator::new(Grid::new_1d(3, 1.0).unwrap());
        assert!(acc.merge(&other).is_err());
        assert_eq!(acc.count(), 0);
    }

    #[test]
    fn merge_commutes_on_integer_sums() {
        let mut a = CorrelationAccumulator::new(g1());
        let mut b = CorrelationAccumulator::new(g1());
        for k in 0..5 {
            a.update_raw(k as f64, &[2.0 * k as f64, 1.0]).unwrap();
            b.update_raw(10.0 - k as f64, &[3.0, k as f64]).unwrap();
        }
        assert_eq!(
            CorrelationAccumulator::merged(&a, &b).unwrap(),
            CorrelationAccumulator::merged(&b, &a).unwrap()
        );
        let empty = CorrelationAccumulator::new(g1());
        assert_eq!(CorrelationAccumulator::merged(&a, &empty).unwrap(), a);
    }

    #[test]
    fn split_merge_matches_sequential() {
        let grid = Grid::new_1d(8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let updates: Vec<(f64, Vec<f64>)> = (0..100)
            .map(|_| {
                let i1: f64 = rng.random::<f64>() * 3.0;
                (i1, (0..8).map(|j| i1 * (j as f64 + 1.0) * 0.3 + rng.random::<f64>()).collect())
            })
            .collect();
        let mut seq = CorrelationAccumulator::new(grid);
        for (i1, i2) in &updates {
            seq.update_raw(*i1, i2).unwrap();
        }
        let mut parts = vec![CorrelationAccumulator::new(grid); 4];
        for (k, (i1, i2)) in updates.iter().enumerate() {
            parts[k * 4 / updates.len()].update_raw(*i1, i2).unwrap();
        }
        let mut merged = CorrelationAccumulator::new(grid);
        for p in &parts {
            merged.merge(p).unwrap();
        }
        assert_eq!(merged.count(), 100);
        let (a, b) = (seq.finalize().unwrap(), merged.finalize().unwrap());
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn snapshot_roundtrip_preserves_finalize() {
        let grid = Grid::new_1d(4, 1.0).unwrap();
        let mut acc = CorrelationAccumulator::new(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let i1 = rng.random::<f64>();
            acc.update_raw(i1, &[rng.random(), i1 * 0.1, 3.0, rng.random::<f64>() * 1e6]).unwrap();
        }
        let back = CorrelationAccumulator::from_snapshot(&acc.snapshot()).unwrap();
        assert_eq!(back.finalize().unwrap(), acc.finalize().unwrap());
    }

    #[test]
    fn coherence_map_cases() {
        // exponential statistics at the reference pixel, independent far pixel
        let grid = Grid::new_1d(2, 1.0).unwrap();
        let mut acc = CorrelationAccumulator::new(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        for _ in 0..n {
            let i_ref = -(1.0 - rng.random::<f64>()).ln();
            let i_far = -(1.0 - rng.random::<f64>()).ln();
            acc.update_raw(i_ref, &[i_ref, i_far]).unwrap();
        }
        let mu = coherence_map(&acc).unwrap();
        assert!((mu.samples()[0] - 1.0).abs() < 0.05, "{}", mu.samples()[0]);
        assert!(mu.samples()[1].abs() < 3.0 / (n as f64).sqrt(), "{}", mu.samples()[1]);

        let mut flat = CorrelationAccumulator::new(grid);
        for _ in 0..10 {
            flat.update_raw(2.0, &[2.0, 3.0]).unwrap();
        }
        assert!(coherence_map(&flat).unwrap().samples().iter().all(|v| *v == 0.0));

        let mut dark = CorrelationAccumulator::new(grid);
        for _ in 0..3 {
            dark.update_raw(1.0, &[1.0, 0.0]).unwrap();
        }
        assert!(matches!(coherence_map(&dark), Err(Error::DivisionByZero(_))));
    }

    proptest! {
        #[test]
        fn scale_covariance(alpha in 0.01f64..100.0, beta in 0.01f64..100.0, seed in 0u64..1000) {
            let grid = Grid::new_1d(3, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut plain = CorrelationAccumulator::new(grid);
            let mut scaled = CorrelationAccumulator::new(grid);
            for _ in 0..50 {
                let i1 = rng.random::<f64>();
                let i2 = [i1 + rng.random::<f64>(), rng.random::<f64>(), 2.0 * i1];
                plain.update_raw(i1, &i2).unwrap();
                scaled.update_raw(alpha * i1, &i2.map(|v| beta * v)).unwrap();
            }
            let g = plain.finalize().unwrap();
            let gs = scaled.finalize().unwrap();
            for (a, b) in g.samples().iter().zip(gs.samples()) {
                let tol = 1e-12 * (alpha * beta) * (plain.s1() * plain.s2().iter().copied().fold(0.0, f64::max));
                prop_assert!((a * alpha * beta - b).abs() <= tol);
            }
            let mu = coherence_map(&plain).unwrap();
            let mus = coherence_map(&scaled).unwrap();
            for (a, b) in mu.samples().iter().zip(mus.samples()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn merge_any_partition(split_a in 1usize..60, split_b in 1usize..60, seed in 0u64..1000) {
            let grid = Grid::new_1d(2, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<(f64, [f64; 2])> = (0..60).map(|_| {
                let i1 = rng.random::<f64>() * 10.0;
                (i1, [i1 * 0.5 + rng.random::<f64>(), rng.random::<f64>()])
            }).collect();
            let (lo, hi) = (split_a.min(split_b), split_a.max(split_b));
            let mut seq = CorrelationAccumulator::new(grid);
            let mut parts = [CorrelationAccumulator::new(grid), CorrelationAccumulator::new(grid), CorrelationAccumulator::new(grid)];
            for (k, (i1, i2)) in data.iter().enumerate() {
                seq.update_raw(*i1, i2).unwrap();
                let p = if k < lo { 0 } else if k < hi { 1 } else { 2 };
                parts[p].update_raw(*i1, i2).unwrap();
            }
            // (a + b) + c and a + (c + b)
            let left = CorrelationAccumulator::merged(&CorrelationAccumulator::merged(&parts[0], &parts[1]).unwrap(), &parts[2]).unwrap();
            let right = CorrelationAccumulator::merged(&parts[0], &CorrelationAccumulator::merged(&parts[2], &parts[1]).unwrap()).unwrap();
            let s = seq.finalize().unwrap();
            for other in [left.finalize().unwrap(), right.finalize().unwrap()] {
                for (a, b) in s.samples().iter().zip(other.samples()) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs());
                }
            }
        }
    }
}
