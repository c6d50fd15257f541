//! Pseudo-thermal source realizations.
//!
//! Every in-aperture sample is `A e^{jφ}` with a Rayleigh amplitude and a
//! uniform phase, independent across pixels and across realizations. The
//! random sequence of a realization depends only on `(seed, realization_index)`,
//! so realizations can be generated in any order on any number of threads.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApertureShape {
    /// Slit of width `diameter` (1D grids).
    Slit,
    /// Disk of the given diameter (2D grids).
    Disk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub grid: Grid,
    pub aperture_diameter: f64,
    /// Rayleigh scale parameter squared; `E[A^2] = 2 sigma2`.
    pub sigma2: f64,
    pub aperture_shape: ApertureShape,
    pub wavelength: f64,
}

impl SourceSpec {
    /// Slit for 1D grids, disk for 2D grids, `sigma2 = 1`.
    pub fn new(grid: Grid, aperture_diameter: f64, wavelength: f64) -> Self {
        let aperture_shape = if grid.dims() == 1 {
            ApertureShape::Slit
        } else {
            ApertureShape::Disk
        };
        SourceSpec {
            grid,
            aperture_diameter,
            sigma2: 1.0,
            aperture_shape,
            wavelength,
        }
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let phi = self.aperture_diameter;
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "aperture diameter must be positive, got {phi}"
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidArgument("wavelength must be positive".into()));
        }
        match (self.aperture_shape, self.grid.dims()) {
            (ApertureShape::Slit, 1) | (ApertureShape::Disk, 2) => {}
            (shape, dims) => {
                return Err(Error::InvalidArgument(format!(
                    "{shape:?} aperture on a {dims}D grid"
                )))
            }
        }
        let extent = self
            .grid
            .y
            .map_or(self.grid.x.physical_extent(), |y| {
                y.physical_extent().min(self.grid.x.physical_extent())
            });
        if phi > extent {
            return Err(Error::Geometry(format!(
                "aperture diameter {phi:e} m exceeds the source grid extent {extent:e} m"
            )));
        }
        Ok(())
    }

    /// Whether the sample centered at `(x, y)` is transmitted. Boundary inclusive.
    pub fn inside(&self, x: f64, y: f64) -> bool {
        let r = self.aperture_diameter / 2.0;
        match self.aperture_shape {
            ApertureShape::Slit => x.abs() <= r,
            ApertureShape::Disk => x * x + y * y <= r * r,
        }
    }

    /// Flat indices of in-aperture samples, ascending.
    pub fn aperture_indices(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&i| {
                let (x, y) = self.grid.position(i);
                self.inside(x, y)
            })
            .collect()
    }
}

/// Identifies the random sequence of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub realization_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, realization_index: u64) -> Self {
        RngStream {
            seed,
            realization_index,
        }
    }

    /// ChaCha8 keyed by `seed`, with the realization index as its stream id.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.realization_index);
        rng
    }

    /// A seed for an independent family of streams, e.g. one per sweep point.
    pub fn derive_seed(seed: u64, lane: u64) -> u64 {
        // splitmix64 finalizer
        let mut z = seed ^ lane.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// One unit-scale (`sigma = 1`) circular Gaussian sample drawn as Rayleigh amplitude
/// times a phase uniform on `(0, 2π]`.
#[inline]
pub fn unit_thermal_sample<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let u_amp: f64 = rng.random();
    let u_phase: f64 = rng.random();
    let amplitude = (-2.0 * (1.0 - u_amp).ln()).sqrt();
    let phase = TAU * (1.0 - u_phase);
    Complex64::from_polar(amplitude, phase)
}

/// Draws one source realization. Samples outside the aperture are exactly zero.
pub fn sample_source(spec: &SourceSpec, stream: RngStream) -> Result<ComplexField> {
    spec.validate()?;
    let indices = spec.aperture_indices();
    let mut samples = vec![Complex64::new(0.0, 0.0); spec.grid.len()];
    fill_source(spec.sigma2.sqrt(), &indices, stream, &mut samples);
    Ok(ComplexField::from_parts_unchecked(
        spec.grid,
        samples,
        spec.wavelength,
    ))
}

/// Writes a realization into `out` at the given in-aperture `indices`, leaving the
/// other entries untouched. Draws happen in the order of `indices`.
pub(crate) fn fill_source(sigma: f64, indices: &[usize], stream: RngStream, out: &mut [Complex64]) {
    let mut rng = stream.rng();
    for &i in indices {
        out[i] = unit_thermal_sample(&mut rng) * sigma;
    }
}
