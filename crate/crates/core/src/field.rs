//! Sampled complex amplitudes and real-valued patterns.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Complex optical amplitude sampled on a grid at a fixed wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    samples: Vec<Complex64>,
    wavelength: f64,
}

impl ComplexField {
    pub fn new(grid: Grid, samples: Vec<Complex64>, wavelength: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.len()
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "non-finite field sample at index {i}"
            )));
        }
        Ok(ComplexField {
            grid,
            samples,
            wavelength,
        })
    }

    pub fn zeros(grid: Grid, wavelength: f64) -> Result<Self> {
        Self::new(grid, vec![Complex64::new(0.0, 0.0); grid.len()], wavelength)
    }

    /// Samples `f(x, y)` at every grid point (`y` is 0 in 1D).
    pub fn from_fn(grid: Grid, wavelength: f64, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let samples = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.position(i);
                f(x, y)
            })
            .collect();
        Self::new(grid, samples, wavelength)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, samples: Vec<Complex64>, wavelength: f64) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        ComplexField {
            grid,
            samples,
            wavelength,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn intensity(&self) -> RealPattern {
        intensity(self)
    }

    /// `alpha * self + beta * other`, for linearity checks.
    pub fn linear_combination(&self, alpha: Complex64, other: &ComplexField, beta: Complex64) -> Result<Self> {
        self.grid.ensure_matches(&other.grid, "linear combination")?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.grid, samples, self.wavelength)
    }
}

/// Real samples on a grid. Intensities are non-negative; correlation
/// estimates before normalization may be signed.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPattern {
    grid: Grid,
    samples: Vec<f64>,
}

impl RealPattern {
    pub fn new(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(RealPattern { grid, samples })
    }

    pub fn zeros(grid: Grid) -> Self {
        RealPattern {
            grid,
            samples: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let samples = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.position(i);
                f(x, y)
            })
            .collect();
        Self::new(grid, samples)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        RealPattern { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Row `iy` of a 2D pattern (the whole pattern in 1D) as a 1D pattern.
    pub fn row(&self, iy: usize) -> Result<RealPattern> {
        let nx = self.grid.x.points;
        match self.grid.y {
            None if iy == 0 => Ok(self.clone()),
            Some(ay) if iy < ay.points => Ok(RealPattern {
                grid: Grid::from_axes(self.grid.x, None),
                samples: self.samples[iy * nx..(iy + 1) * nx].to_vec(),
            }),
            _ => Err(Error::InvalidArgument(format!("row {iy} out of range"))),
        }
    }

    /// Column `ix` of a 2D pattern as a 1D pattern along `y`.
    pub fn column(&self, ix: usize) -> Result<RealPattern> {
        let nx = self.grid.x.points;
        let ay = self
            .grid
            .y
            .ok_or_else(|| Error::InvalidArgument("column of a 1D pattern".into()))?;
        if ix >= nx {
            return Err(Error::InvalidArgument(format!("column {ix} out of range")));
        }
        Ok(RealPattern {
            grid: Grid::from_axes(ay, None),
            samples: (0..ay.points).map(|iy| self.samples[iy * nx + ix]).collect(),
        })
    }
}

/// Elementwise squared modulus.
pub fn intensity(field: &ComplexField) -> RealPattern {
    RealPattern::from_parts_unchecked(
        field.grid,
        field.samples.iter().map(|s| s.norm_sqr()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new_1d(4, 1e-6).unwrap()
    }

    #[test]
    fn zero_field_has_zero_intensity() {
        let f = ComplexField::zeros(grid(), 0.5e-6).unwrap();
        assert!(intensity(&f).samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn modulus_arithmetic() {
        let mut s = vec![Complex64::new(0.0, 0.0); 4];
        s[1] = Complex64::new(3.0, 4.0);
        let f = ComplexField::new(grid(), s, 0.5e-6).unwrap();
        assert_eq!(intensity(&f).samples()[1], 25.0);
    }

    #[test]
    fn unit_phasors_have_unit_intensity() {
        let s: Vec<_> = [0.1, 1.7, -2.9, 6.0].iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let f = ComplexField::new(grid(), s, 0.5e-6).unwrap();
        for v in intensity(&f).samples() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        let bad = vec![Complex64::new(f64::NAN, 0.0); 4];
        assert!(ComplexField::new(grid(), bad, 0.5e-6).is_err());
        assert!(ComplexField::new(grid(), vec![Complex64::new(0.0, 0.0); 3], 0.5e-6).is_err());
        assert!(RealPattern::new(grid(), vec![0.0, 1.0, f64::INFINITY, 0.0]).is_err());
    }
}
