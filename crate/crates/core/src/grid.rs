//! Uniform sampling grids in one or two transverse dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled axis: `points` samples spaced `pitch` meters apart, centered on `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub points: usize,
    pub pitch: f64,
    pub origin: f64,
}

impl Axis {
    pub fn new(points: usize, pitch: f64) -> Result<Self> {
        Self::with_origin(points, pitch, 0.0)
    }

    pub fn with_origin(points: usize, pitch: f64, origin: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument(format!(
                "axis needs at least 2 points, got {points}"
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pitch must be positive and finite, got {pitch}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        Ok(Axis {
            points,
            pitch,
            origin,
        })
    }

    #[inline]
    pub fn coordinate(&self, index: usize) -> f64 {
        self.origin + (index as f64 - (self.points as f64 - 1.0) / 2.0) * self.pitch
    }

    /// Fractional index of a coordinate; the inverse of [`Axis::coordinate`].
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x - self.origin) / self.pitch + (self.points as f64 - 1.0) / 2.0
    }

    /// Index of the sample closest to `x`, clamped to the axis.
    pub fn nearest_index(&self, x: f64) -> usize {
        let f = self.fractional_index(x).round();
        f.clamp(0.0, (self.points - 1) as f64) as usize
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coordinate(i)).collect()
    }

    /// Width covered by the samples, `points * pitch`.
    pub fn physical_extent(&self) -> f64 {
        self.points as f64 * self.pitch
    }

    /// Distance from the origin to the outermost sample center.
    pub fn half_span(&self) -> f64 {
        (self.points as f64 - 1.0) / 2.0 * self.pitch
    }

    fn same_as(&self, other: &Axis) -> bool {
        self.points == other.points
            && approx_eq(self.pitch, other.pitch)
            && (self.origin - other.origin).abs() <= 1e-9 * self.pitch
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// A 1D or 2D grid. In 2D, samples are stored row-major with `x` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x: Axis,
    pub y: Option<Axis>,
}

impl Grid {
    pub fn new_1d(points: usize, pitch: f64) -> Result<Self> {
        Ok(Grid {
            x: Axis::new(points, pitch)?,
            y: None,
        })
    }

    pub fn new_2d(points: (usize, usize), pitch: (f64, f64)) -> Result<Self> {
        Ok(Grid {
            x: Axis::new(points.0, pitch.0)?,
            y: Some(Axis::new(points.1, pitch.1)?),
        })
    }

    pub fn from_axes(x: Axis, y: Option<Axis>) -> Self {
        Grid { x, y }
    }

    /// A degenerate one-sample grid at `x`, used for point detectors.
    pub fn single_point(x: f64) -> Self {
        Grid {
            x: Axis {
                points: 1,
                pitch: 1.0,
                origin: x,
            },
            y: None,
        }
    }

    pub fn dims(&self) -> usize {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.x.points * self.y.map_or(1, |a| a.points)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area (2D) or length (1D) element of one sample.
    pub fn cell_measure(&self) -> f64 {
        self.x.pitch * self.y.map_or(1.0, |a| a.pitch)
    }

    /// Coordinates `(x, y)` of a flat sample index; `y` is 0 for 1D grids.
    pub fn position(&self, flat: usize) -> (f64, f64) {
        let nx = self.x.points;
        let (ix, iy) = (flat % nx, flat / nx);
        let y = self.y.map_or(0.0, |a| a.coordinate(iy));
        (self.x.coordinate(ix), y)
    }

    /// Flat index of the sample nearest to `(x, y)`.
    pub fn nearest_flat_index(&self, x: f64, y: f64) -> usize {
        let ix = self.x.nearest_index(x);
        let iy = self.y.map_or(0, |a| a.nearest_index(y));
        iy * self.x.points + ix
    }

    pub fn matches(&self, other: &Grid) -> bool {
        self.x.same_as(&other.x)
            && match (self.y, other.y) {
                (None, None) => true,
                (Some(a), Some(b)) => a.same_as(&b),
                _ => false,
            }
    }

    pub(crate) fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )))
        }
    }
}

/// Builds a grid symmetric about zero.
pub fn make_grid(dims: usize, extent_points: &[usize], pitch: &[f64]) -> Result<Grid> {
    match (dims, extent_points, pitch) {
        (1, [n], [p]) => Grid::new_1d(*n, *p),
        (2, [nx, ny], [px, py]) => Grid::new_2d((*nx, *ny), (*px, *py)),
        _ => Err(Error::InvalidArgument(format!(
            "dims={dims} needs {dims} extents and pitches, got {} and {}",
            extent_points.len(),
            pitch.len()
        ))),
    }
}
