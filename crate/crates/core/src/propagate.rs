//! Paraxial Fresnel propagation between sampled planes.
//!
//! The free-space response over a distance `z` is the chirp
//! `h(x_in, x_out) = P(z) exp(iπ (x_out - x_in)^2 / (λ z))`, with the prefactor
//! `P(z) = e^{ikz} / (iλz)` in 2D and its per-dimension square root
//! `e^{ikz} / sqrt(iλz)` in 1D. Two discretizations are provided:
//!
//! * [`KernelForm::DirectQuadrature`] (1D): the full Riemann-sum matrix
//!   `E_out[q] = Σ_p E_in[p] h(x_p, x_q) Δx`, built once per geometry and then
//!   applied as a matrix-vector product. Output grids are arbitrary.
//! * [`KernelForm::FftOneStep`] (1D or 2D): the same sum evaluated with one FFT,
//!   which forces the output pitch to `λ z / (M Δx)`.
//! * [`KernelForm::ChirpZ`] (1D): the direct quadrature sum again, for arbitrary
//!   uniform output grids, evaluated as a chirp-z transform (Bluestein convolution
//!   of length `≥ M + Q - 1`) instead of an `M × Q` matrix product.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Axis, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    DirectQuadrature,
    FftOneStep,
    ChirpZ,
}

/// Chirp parameters shared by kernel construction and point evaluation.
#[derive(Debug, Clone, Copy)]
struct Chirp {
    /// `π / (λ z)`
    rate: f64,
    /// Prefactor times the input cell measure.
    scale: Complex64,
}

impl Chirp {
    fn new(dims: usize, distance: f64, wavelength: f64, cell: f64) -> Self {
        let kz = TAU / wavelength * distance;
        let lz = wavelength * distance;
        let pre = if dims == 1 {
            Complex64::from_polar(1.0 / lz.sqrt(), kz - FRAC_PI_4)
        } else {
            Complex64::from_polar(1.0 / lz, kz - FRAC_PI_2)
        };
        Chirp {
            rate: PI / lz,
            scale: pre * cell,
        }
    }

    #[inline]
    fn weight(&self, sep2: f64) -> Complex64 {
        self.scale * Complex64::cis(self.rate * sep2)
    }
}

/// Fixed Fresnel operator from `grid_in` to `grid_out`. Immutable once built.
#[derive(Clone)]
pub struct PropagationKernel {
    grid_in: Grid,
    grid_out: Grid,
    distance: f64,
    wavelength: f64,
    form: KernelForm,
    op: Operator,
}

#[derive(Clone)]
enum Operator {
    /// Split real/imaginary weights, row `p` holds the contributions of input `p`
    /// to every output sample.
    Direct { re: Vec<f64>, im: Vec<f64> },
    Fft(Box<FftOperator>),
    ChirpZ(Box<ChirpZOperator>),
}

/// `E_out[q] = post[q] · Σ_p (pre[p] E_in[p]) b[q - p]`, the convolution done by FFT.
#[derive(Clone)]
struct ChirpZOperator {
    pre: Vec<Complex64>,
    /// Output phases, prefactor and the `1/L` of the inverse transform.
    post: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
struct FftOperator {
    x: AxisPhases,
    y: Option<AxisPhases>,
    scale: Complex64,
    fft_x: Arc<dyn Fft<f64>>,
    fft_y: Option<Arc<dyn Fft<f64>>>,
}

#[derive(Clone)]
struct AxisPhases {
    input: Vec<Complex64>,
    output: Vec<Complex64>,
}

impl fmt::Debug for PropagationKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropagationKernel")
            .field("grid_in", &self.grid_in)
            .field("grid_out", &self.grid_out)
            .field("distance", &self.distance)
            .field("wavelength", &self.wavelength)
            .field("form", &self.form)
            .finish()
    }
}

/// The output axis an FFT one-step kernel produces from `input` over `distance`.
pub fn fft_output_axis(input: &Axis, distance: f64, wavelength: f64, origin: f64) -> Result<Axis> {
    let pitch = wavelength * distance / (input.points as f64 * input.pitch);
    Axis::with_origin(input.points, pitch, origin)
}

/// Output grid of the FFT one-step form, positioned so that one sample sits at 0.
pub fn fft_output_grid(grid_in: &Grid, distance: f64, wavelength: f64) -> Result<Grid> {
    let centered = |a: &Axis| -> Result<Axis> {
        let mut out = fft_output_axis(a, distance, wavelength, 0.0)?;
        if a.points % 2 == 0 {
            out.origin = -out.pitch / 2.0;
        }
        Ok(out)
    };
    Ok(Grid::from_axes(
        centered(&grid_in.x)?,
        grid_in.y.as_ref().map(centered).transpose()?,
    ))
}

pub fn fresnel_kernel(
    grid_in: &Grid,
    grid_out: &Grid,
    distance: f64,
    wavelength: f64,
    form: KernelForm,
) -> Result<PropagationKernel> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Geometry(format!(
            "propagation distance must be positive, got {distance}"
        )));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if grid_in.dims() != grid_out.dims() {
        return Err(Error::GridMismatch("input and output grids differ in dimension".into()));
    }
    let op = match form {
        KernelForm::DirectQuadrature => direct_operator(grid_in, grid_out, distance, wavelength)?,
        KernelForm::FftOneStep => fft_operator(grid_in, grid_out, distance, wavelength)?,
        KernelForm::ChirpZ => chirp_z_operator(grid_in, grid_out, distance, wavelength)?,
    };
    Ok(PropagationKernel {
        grid_in: *grid_in,
        grid_out: *grid_out,
        distance,
        wavelength,
        form,
        op,
    })
}

fn direct_operator(grid_in: &Grid, grid_out: &Grid, distance: f64, wavelength: f64) -> Result<Operator> {
    if grid_in.dims() != 1 {
        return Err(Error::InvalidArgument(
            "direct quadrature kernels are one-dimensional; use the FFT form in 2D".into(),
        ));
    }
    let chirp = Chirp::new(1, distance, wavelength, grid_in.x.pitch);
    let (m, q) = (grid_in.x.points, grid_out.x.points);
    let out_x = grid_out.x.coordinates();
    let mut re = Vec::with_capacity(m * q);
    let mut im = Vec::with_capacity(m * q);
    for p in 0..m {
        let xp = grid_in.x.coordinate(p);
        for &xq in &out_x {
            let d = xq - xp;
            let w = chirp.weight(d * d);
            re.push(w.re);
            im.push(w.im);
        }
    }
    Ok(Operator::Direct { re, im })
}

fn chirp_z_operator(grid_in: &Grid, grid_out: &Grid, distance: f64, wavelength: f64) -> Result<Operator> {
    if grid_in.dims() != 1 {
        return Err(Error::InvalidArgument("chirp-z kernels are one-dimensional".into()));
    }
    let chirp = Chirp::new(1, distance, wavelength, grid_in.x.pitch);
    let (a_in, a_out) = (grid_in.x, grid_out.x);
    let (m, q) = (a_in.points, a_out.points);
    let (x0, y0) = (a_in.coordinate(0), a_out.coordinate(0));
    let rate = chirp.rate;
    // (y0 + qδ - x0 - pΔ)² splits into p-only, q-only and -2Δδ·pq terms;
    // pq = (p² + q² - (q - p)²) / 2 turns the last one into a convolution.
    let beta = 2.0 * rate * a_in.pitch * a_out.pitch;
    let len = (m + q - 1).next_power_of_two();
    let pre = (0..m)
        .map(|p| {
            let x = a_in.coordinate(p);
            let pf = p as f64;
            Complex64::cis(rate * (x * x - 2.0 * y0 * (x - x0)) - beta * pf * pf / 2.0)
        })
        .collect();
    let post = (0..q)
        .map(|k| {
            let y = a_out.coordinate(k);
            let kf = k as f64;
            chirp.scale * Complex64::cis(rate * (y * y - 2.0 * x0 * y) - beta * kf * kf / 2.0) / len as f64
        })
        .collect();
    let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
    for k in 0..q {
        let kf = k as f64;
        kernel_hat[k] = Complex64::cis(beta * kf * kf / 2.0);
    }
    for k in 1..m {
        let kf = k as f64;
        kernel_hat[len - k] = Complex64::cis(beta * kf * kf / 2.0);
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut kernel_hat);
    Ok(Operator::ChirpZ(Box::new(ChirpZOperator {
        pre,
        post,
        kernel_hat,
        fwd,
        inv,
    })))
}

impl ChirpZOperator {
    /// Leaves the unphased convolution in `buf[..Q]`.
    fn convolve(&self, input: &[Complex64], buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        let len = self.kernel_hat.len();
        buf.clear();
        buf.extend(input.iter().zip(&self.pre).map(|(e, w)| e * w));
        buf.resize(len, Complex64::new(0.0, 0.0));
        scratch.resize(self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len()), Complex64::new(0.0, 0.0));
        self.fwd.process_with_scratch(buf, scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process_with_scratch(buf, scratch);
    }

    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        let (mut buf, mut scratch) = (Vec::new(), Vec::new());
        self.convolve(input, &mut buf, &mut scratch);
        for ((o, b), w) in out.iter_mut().zip(&buf).zip(&self.post) {
            *o = b * w;
        }
    }

    fn apply_intensity(&self, input: &[Complex64], buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>, out: &mut [f64]) {
        self.convolve(input, buf, scratch);
        for ((o, b), w) in out.iter_mut().zip(buf.iter()).zip(&self.post) {
            *o = (b * w).norm_sqr();
        }
    }
}

fn axis_phases(a_in: &Axis, a_out: &Axis, distance: f64, wavelength: f64) -> Result<AxisPhases> {
    let m = a_in.points;
    let expected = wavelength * distance / (m as f64 * a_in.pitch);
    if a_out.points != m || (a_out.pitch - expected).abs() > 1e-9 * expected {
        return Err(Error::Sampling(format!(
            "FFT one-step output must have {m} points at pitch {expected:e} m, requested {} at {:e} m",
            a_out.points, a_out.pitch
        )));
    }
    let lz = wavelength * distance;
    let c = (m as f64 - 1.0) / 2.0;
    let mf = m as f64;
    let (o_in, o_out) = (a_in.origin, a_out.origin);
    let input = (0..m)
        .map(|p| {
            let x = a_in.coordinate(p);
            let pc = p as f64 - c;
            let phase = PI * x * x / lz - TAU * pc * a_in.pitch * o_out / lz + TAU * c * p as f64 / mf;
            Complex64::cis(phase)
        })
        .collect();
    let output = (0..m)
        .map(|q| {
            let u = a_out.coordinate(q);
            let qc = q as f64 - c;
            let phase = PI * u * u / lz
                - TAU * (o_in * o_out / lz + o_in * qc * a_out.pitch / lz - c * q as f64 / mf + c * c / mf);
            Complex64::cis(phase)
        })
        .collect();
    Ok(AxisPhases { input, output })
}

fn fft_operator(grid_in: &Grid, grid_out: &Grid, distance: f64, wavelength: f64) -> Result<Operator> {
    let mut planner = FftPlanner::new();
    let x = axis_phases(&grid_in.x, &grid_out.x, distance, wavelength)?;
    let y = match (grid_in.y, grid_out.y) {
        (Some(a), Some(b)) => Some(axis_phases(&a, &b, distance, wavelength)?),
        _ => None,
    };
    let chirp = Chirp::new(grid_in.dims(), distance, wavelength, grid_in.cell_measure());
    Ok(Operator::Fft(Box::new(FftOperator {
        fft_x: planner.plan_fft_forward(grid_in.x.points),
        fft_y: grid_in.y.map(|a| planner.plan_fft_forward(a.points)),
        x,
        y,
        scale: chirp.scale,
    })))
}

impl PropagationKernel {
    pub fn grid_in(&self) -> &Grid {
        &self.grid_in
    }

    pub fn grid_out(&self) -> &Grid {
        &self.grid_out
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    /// Matrix entry coupling input `p` to output `q` (direct form only).
    pub fn entry(&self, q: usize, p: usize) -> Option<Complex64> {
        match &self.op {
            Operator::Direct { re, im } => {
                let nq = self.grid_out.x.points;
                (p < self.grid_in.x.points && q < nq)
                    .then(|| Complex64::new(re[p * nq + q], im[p * nq + q]))
            }
            Operator::Fft(_) | Operator::ChirpZ(_) => None,
        }
    }

    fn check_input(&self, field: &ComplexField) -> Result<()> {
        self.grid_in.ensure_matches(field.grid(), "field vs kernel input grid")?;
        let (a, b) = (field.wavelength(), self.wavelength);
        if (a - b).abs() > 1e-12 * b {
            return Err(Error::GridMismatch(format!(
                "field wavelength {a:e} m vs kernel wavelength {b:e} m"
            )));
        }
        Ok(())
    }

    /// Applies the operator to raw input samples, writing output amplitudes into `out`.
    /// Exactly-zero inputs are skipped; the summation order over inputs is ascending.
    pub fn apply_into(&self, input: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(input.len(), self.grid_in.len());
        assert_eq!(out.len(), self.grid_out.len());
        match &self.op {
            Operator::Direct { re, im } => {
                let nq = self.grid_out.x.points;
                let mut acc_re = vec![0.0; nq];
                let mut acc_im = vec![0.0; nq];
                direct_accumulate(re, im, nq, input, &mut acc_re, &mut acc_im);
                for (o, (r, i)) in out.iter_mut().zip(acc_re.into_iter().zip(acc_im)) {
                    *o = Complex64::new(r, i);
                }
            }
            Operator::Fft(op) => op.apply(&self.grid_in, input, out),
            Operator::ChirpZ(op) => op.apply(input, out),
        }
    }

    /// Output intensities `|E_out|^2` written into `out`; `scratch` holds the
    /// real and imaginary accumulators (resized as needed).
    pub fn apply_intensity_into(&self, input: &[Complex64], scratch: &mut (Vec<f64>, Vec<f64>), out: &mut [f64]) {
        match &self.op {
            Operator::Direct { re, im } => {
                let nq = self.grid_out.x.points;
                assert_eq!(input.len(), self.grid_in.len());
                assert_eq!(out.len(), nq);
                let (acc_re, acc_im) = scratch;
                acc_re.clear();
                acc_re.resize(nq, 0.0);
                acc_im.clear();
                acc_im.resize(nq, 0.0);
                direct_accumulate(re, im, nq, input, acc_re, acc_im);
                for ((o, r), i) in out.iter_mut().zip(acc_re.iter()).zip(acc_im.iter()) {
                    *o = r * r + i * i;
                }
            }
            Operator::Fft(op) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.grid_out.len()];
                op.apply(&self.grid_in, input, &mut buf);
                for (o, v) in out.iter_mut().zip(&buf) {
                    *o = v.norm_sqr();
                }
            }
            Operator::ChirpZ(op) => {
                assert_eq!(out.len(), self.grid_out.len());
                op.apply_intensity(input, &mut Vec::new(), &mut Vec::new(), out);
            }
        }
    }

    /// Intensities for `batch` inputs laid out back to back. Each kernel row is
    /// applied to the whole batch before moving on; per input the arithmetic is the
    /// same as [`Self::apply_intensity_into`], so results are bitwise equal.
    pub fn apply_intensity_batch(&self, inputs: &[Complex64], batch: usize, scratch: &mut (Vec<f64>, Vec<f64>), out: &mut [f64]) {
        let (np, nq) = (self.grid_in.len(), self.grid_out.len());
        assert_eq!(inputs.len(), np * batch);
        assert_eq!(out.len(), nq * batch);
        match &self.op {
            Operator::Direct { re, im } => {
                let (acc_re, acc_im) = scratch;
                acc_re.clear();
                acc_re.resize(nq * batch, 0.0);
                acc_im.clear();
                acc_im.resize(nq * batch, 0.0);
                for p in 0..np {
                    let row_re = &re[p * nq..(p + 1) * nq];
                    let row_im = &im[p * nq..(p + 1) * nq];
                    for b in 0..batch {
                        let e = inputs[b * np + p];
                        if e.re == 0.0 && e.im == 0.0 {
                            continue;
                        }
                        axpy(row_re, row_im, e, &mut acc_re[b * nq..(b + 1) * nq], &mut acc_im[b * nq..(b + 1) * nq]);
                    }
                }
                for ((o, r), i) in out.iter_mut().zip(acc_re.iter()).zip(acc_im.iter()) {
                    *o = r * r + i * i;
                }
            }
            Operator::Fft(_) => {
                for b in 0..batch {
                    self.apply_intensity_into(&inputs[b * np..(b + 1) * np], scratch, &mut out[b * nq..(b + 1) * nq]);
                }
            }
            Operator::ChirpZ(op) => {
                let (mut buf, mut fft_scratch) = (Vec::new(), Vec::new());
                for b in 0..batch {
                    op.apply_intensity(&inputs[b * np..(b + 1) * np], &mut buf, &mut fft_scratch, &mut out[b * nq..(b + 1) * nq]);
                }
            }
        }
    }
}

/// `acc += row * e` on split real/imaginary storage.
#[inline(always)]
fn axpy(row_re: &[f64], row_im: &[f64], e: Complex64, acc_re: &mut [f64], acc_im: &mut [f64]) {
    let n = acc_re.len();
    let (row_re, row_im, acc_im) = (&row_re[..n], &row_im[..n], &mut acc_im[..n]);
    let (er, ei) = (e.re, e.im);
    for j in 0..n {
        acc_re[j] += row_re[j] * er - row_im[j] * ei;
        acc_im[j] += row_re[j] * ei + row_im[j] * er;
    }
}

#[inline]
fn direct_accumulate(re: &[f64], im: &[f64], nq: usize, input: &[Complex64], acc_re: &mut [f64], acc_im: &mut [f64]) {
    for (p, e) in input.iter().enumerate() {
        if e.re == 0.0 && e.im == 0.0 {
            continue;
        }
        axpy(&re[p * nq..(p + 1) * nq], &im[p * nq..(p + 1) * nq], *e, acc_re, acc_im);
    }
}

impl FftOperator {
    fn apply(&self, grid_in: &Grid, input: &[Complex64], out: &mut [Complex64]) {
        let nx = grid_in.x.points;
        let ny = grid_in.y.map_or(1, |a| a.points);
        let one = Complex64::new(1.0, 0.0);
        let mut buf = Vec::with_capacity(input.len());
        for (iy, row) in input.chunks_exact(nx).enumerate() {
            let py = self.y.as_ref().map_or(one, |y| y.input[iy]);
            buf.extend(row.iter().zip(&self.x.input).map(|(e, px)| e * px * py));
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_x.get_inplace_scratch_len()];
        // rows that are entirely zero (outside the aperture) transform to zero
        for row in buf.chunks_exact_mut(nx) {
            if row.iter().any(|v| v.re != 0.0 || v.im != 0.0) {
                self.fft_x.process_with_scratch(row, &mut scratch);
            }
        }
        if let (Some(fft_y), Some(_)) = (&self.fft_y, &self.y) {
            let mut t = transpose(&buf, nx, ny);
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft_y.get_inplace_scratch_len()];
            fft_y.process_with_scratch(&mut t, &mut scratch);
            buf = transpose(&t, ny, nx);
        }
        for ((o_row, b_row), iy) in out.chunks_exact_mut(nx).zip(buf.chunks_exact(nx)).zip(0..) {
            let py = self.y.as_ref().map_or(one, |y| y.output[iy]);
            for ((o, b), px) in o_row.iter_mut().zip(b_row).zip(&self.x.output) {
                *o = b * px * py * self.scale;
            }
        }
    }
}

/// `rows x cols` row-major into `cols x rows` row-major, in cache-sized tiles.
fn transpose(src: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    const TILE: usize = 32;
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    dst
}

/// Propagates a field through a prebuilt kernel.
pub fn propagate(field: &ComplexField, kernel: &PropagationKernel) -> Result<ComplexField> {
    kernel.check_input(field)?;
    let mut out = vec![Complex64::new(0.0, 0.0); kernel.grid_out.len()];
    kernel.apply_into(field.samples(), &mut out);
    Ok(ComplexField::from_parts_unchecked(kernel.grid_out, out, kernel.wavelength))
}

/// Weights `h[i]` such that the field at `point` after `distance` is `Σ h[i] E[i]`
/// for any field sampled on `grid`.
pub fn point_response(grid: &Grid, point: (f64, f64), distance: f64, wavelength: f64) -> Result<Vec<Complex64>> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Geometry(format!(
            "propagation distance must be positive, got {distance}"
        )));
    }
    let chirp = Chirp::new(grid.dims(), distance, wavelength, grid.cell_measure());
    Ok((0..grid.len())
        .map(|i| {
            let (x, y) = grid.position(i);
            let (dx, dy) = (point.0 - x, point.1 - y);
            chirp.weight(if grid.dims() == 1 { dx * dx } else { dx * dx + dy * dy })
        })
        .collect())
}

/// Field at a single point `(x, y)` after `distance`, without building a matrix.
/// Bitwise identical to [`propagate`] onto [`Grid::single_point`] in 1D.
pub fn propagate_to_point(field: &ComplexField, point: (f64, f64), distance: f64, wavelength: f64) -> Result<Complex64> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::Geometry(format!(
            "propagation distance must be positive, got {distance}"
        )));
    }
    if (field.wavelength() - wavelength).abs() > 1e-12 * wavelength {
        return Err(Error::GridMismatch("field wavelength differs from the requested one".into()));
    }
    let grid = field.grid();
    let chirp = Chirp::new(grid.dims(), distance, wavelength, grid.cell_measure());
    let (mut acc_re, mut acc_im) = (0.0, 0.0);
    for (i, e) in field.samples().iter().enumerate() {
        if e.re == 0.0 && e.im == 0.0 {
            continue;
        }
        let (x, y) = grid.position(i);
        let (dx, dy) = (point.0 - x, point.1 - y);
        let sep2 = if grid.dims() == 1 { dx * dx } else { dx * dx + dy * dy };
        let w = chirp.weight(sep2);
        acc_re += w.re * e.re - w.im * e.im;
        acc_im += w.re * e.im + w.im * e.re;
    }
    Ok(Complex64::new(acc_re, acc_im))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingWarning {
    /// The chirp phase advances by more than π between neighbouring input
    /// samples at the largest input/output separation.
    ChirpAliasing { axis: char, phase_step: f64 },
    /// The largest input/output separation subtends more than 0.1 rad.
    NonParaxial { axis: char, half_angle: f64 },
}

impl fmt::Display for SamplingWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingWarning::ChirpAliasing { axis, phase_step } => write!(
                f,
                "chirp aliasing along {axis}: edge phase step {phase_step:.3} rad exceeds π"
            ),
            SamplingWarning::NonParaxial { axis, half_angle } => write!(
                f,
                "paraxial approximation strained along {axis}: half-angle {half_angle:.3} rad exceeds 0.1"
            ),
        }
    }
}

pub const PARAXIAL_LIMIT: f64 = 0.1;

pub fn validate_sampling(kernel: &PropagationKernel) -> Vec<SamplingWarning> {
    let mut warnings = Vec::new();
    let axes = [
        ('x', Some(kernel.grid_in.x), Some(kernel.grid_out.x)),
        ('y', kernel.grid_in.y, kernel.grid_out.y),
    ];
    for (name, a_in, a_out) in axes {
        let (Some(a_in), Some(a_out)) = (a_in, a_out) else {
            continue;
        };
        let in_lo = a_in.coordinate(0);
        let in_hi = a_in.coordinate(a_in.points - 1);
        let out_lo = a_out.coordinate(0);
        let out_hi = a_out.coordinate(a_out.points.saturating_sub(1));
        let reach = (out_hi - in_lo).abs().max((in_hi - out_lo).abs());
        let k = TAU / kernel.wavelength;
        let phase_step = k * a_in.pitch * reach / kernel.distance;
        if phase_step > PI {
            warnings.push(SamplingWarning::ChirpAliasing { axis: name, phase_step });
        }
        let half_angle = reach / kernel.distance;
        if half_angle > PARAXIAL_LIMIT {
            warnings.push(SamplingWarning::NonParaxial { axis: name, half_angle });
        }
    }
    warnings
}
