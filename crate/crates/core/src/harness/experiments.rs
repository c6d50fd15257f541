//! The four experiments (converge, κ sweep, band report, speckle) plus replay of
//! stored records.

use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;

use crate::analyze::{
    band_errors, coherence_length, half_width, min_n_to_threshold, normalize_unit, split_bands,
    BandSplit, Checkpoint, ConvergenceCurve, ThresholdOutcome, ThresholdSearch, Window,
};
use crate::correlate::{coherence_map, CorrelationAccumulator};
use crate::error::{Error, Result};
use crate::field::RealPattern;
use crate::grid::Grid;
use crate::propagate::{
    fft_output_grid, fresnel_kernel, point_response, propagate, propagate_to_point, validate_sampling,
    KernelForm, PropagationKernel,
};
use crate::scene::{apply_mask, double_slit, reference_double_slit, reference_from_mask, TransmissionMask};
use crate::source::{fill_source, sample_source, ApertureShape, RngStream, SourceSpec};

use super::config::{ExperimentConfig, ObjectConfig};
use super::engine::{thread_pool, ChunkedAccumulator, RecordBuffer};
use super::output::{self, BandRow, CurveRow, KappaRow, Manifest, MapRow, PatternRow, SpeckleRow};
use super::records::{read_records, OfflineRecordFile, RecordHeader, RecordWriter};

/// Realizations simulated together; a direct kernel loads each row once per batch.
const BATCH: usize = 16;

fn object_grid_and_mask(config: &ExperimentConfig) -> Result<(Grid, TransmissionMask)> {
    match &config.object {
        ObjectConfig::DoubleSlit { a, b, pitch } => {
            let half = ((a + b) / 2.0 / pitch).ceil() as usize;
            let grid = Grid::new_1d(2 * half + 5, *pitch)?;
            Ok((grid, double_slit(*a, *b, &grid)?))
        }
        ObjectConfig::MaskFile { path, points, pitch, .. } => {
            let grid = Grid::new_1d(*points, *pitch)?;
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot open mask {}: {e}", path.display())))?;
            Ok((grid, TransmissionMask::from_text(std::io::BufReader::new(file), grid)?))
        }
    }
}

/// Theoretical ghost diffraction pattern on the detector grid, peak 1.
pub fn reference_pattern(config: &ExperimentConfig) -> Result<RealPattern> {
    let det = config.detector_grid()?;
    match &config.object {
        ObjectConfig::DoubleSlit { a, b, .. } => reference_double_slit(*a, *b, config.wavelength, config.d2, &det),
        ObjectConfig::MaskFile { .. } => {
            let (_, mask) = object_grid_and_mask(config)?;
            reference_from_mask(&mask, config.wavelength, config.d2, &det)
        }
    }
}

/// Prebuilt operators for one aperture width. Immutable and shared by all workers.
pub struct GhostSetup {
    pub phi: f64,
    pub kappa: f64,
    pub seed: u64,
    pub window: Window,
    pub bands: BandSplit,
    pub reference: RealPattern,
    reference_normalized: Vec<f64>,
    wavelength: f64,
    d2: f64,
    source: SourceSpec,
    aperture: Vec<usize>,
    sigma: f64,
    test_kernel: PropagationKernel,
    mask: TransmissionMask,
    bucket_weights: Vec<Complex64>,
    reference_kernel: PropagationKernel,
    pub warnings: Vec<String>,
}

impl GhostSetup {
    pub fn new(config: &ExperimentConfig, phi: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let source_grid = config.source_grid()?;
        let det = config.detector_grid()?;
        let source = SourceSpec::new(source_grid, phi, config.wavelength).with_sigma2(config.sigma2);
        source.validate()?;
        let aperture = source.aperture_indices();
        if aperture.is_empty() {
            return Err(Error::Geometry(format!("aperture {phi} m covers no source sample")));
        }
        let (obj_grid, mask) = object_grid_and_mask(config)?;
        let test_kernel = fresnel_kernel(&source_grid, &obj_grid, config.d1, config.wavelength, KernelForm::DirectQuadrature)?;
        let reference_kernel = fresnel_kernel(&source_grid, &det, config.d, config.wavelength, config.detector.kernel)?;

        // Test arm folded into one weight per source sample:
        // w[p] = Σ_x h2(x → 0) t(x) K1[x, p].
        let h2 = point_response(&obj_grid, (0.0, 0.0), config.d2, config.wavelength)?;
        let th: Vec<(usize, Complex64)> = mask
            .samples()
            .iter()
            .zip(&h2)
            .enumerate()
            .filter(|(_, (t, _))| **t != 0.0)
            .map(|(x, (t, h))| (x, h * t))
            .collect();
        let mut bucket_weights = vec![Complex64::new(0.0, 0.0); source_grid.len()];
        for &p in &aperture {
            bucket_weights[p] = th
                .iter()
                .map(|&(x, w)| w * test_kernel.entry(x, p).expect("index in range"))
                .sum();
        }

        let mut warnings = Vec::new();
        for (arm, k) in [("test arm", &test_kernel), ("reference arm", &reference_kernel)] {
            for w in validate_sampling(k) {
                warnings.push(format!("{arm}: {w}"));
            }
        }
        let window = config.window()?;
        let bands = split_bands(det.len(), window)?;
        let reference = reference_pattern(config)?;
        let reference_normalized = normalize_unit(reference.samples(), window)?;
        Ok(GhostSetup {
            phi,
            kappa: config.kappa_for(phi),
            seed,
            window,
            bands,
            reference,
            reference_normalized,
            wavelength: config.wavelength,
            d2: config.d2,
            sigma: config.sigma2.sqrt(),
            source,
            aperture,
            test_kernel,
            mask,
            bucket_weights,
            reference_kernel,
            warnings,
        })
    }

    pub fn detector_grid(&self) -> &Grid {
        self.reference_kernel.grid_out()
    }

    pub fn aperture_len(&self) -> usize {
        self.aperture.len()
    }

    /// One realization through the full chain: source, propagation over d1, mask,
    /// propagation to the bucket point over d2; reference arm over d.
    pub fn run_realization(&self, realization_index: u64) -> Result<(f64, RealPattern)> {
        let src = sample_source(&self.source, RngStream::new(self.seed, realization_index))?;
        let at_object = propagate(&src, &self.test_kernel)?;
        let masked = apply_mask(&at_object, &self.mask)?;
        let bucket = propagate_to_point(&masked, (0.0, 0.0), self.d2, self.wavelength)?;
        let i2 = propagate(&src, &self.reference_kernel)?.intensity();
        Ok((bucket.norm_sqr(), i2))
    }

    /// Realizations `start..end` via the folded test arm and batched reference arm.
    pub fn produce(&self, start: u64, end: u64, acc: &mut CorrelationAccumulator, mut records: Option<&mut RecordBuffer>) -> Result<()> {
        let np = self.source.grid.len();
        let nq = self.detector_grid().len();
        let mut inputs = vec![Complex64::new(0.0, 0.0); BATCH * np];
        let mut out = vec![0.0; BATCH * nq];
        let mut scratch = (Vec::new(), Vec::new());
        let mut n = start;
        while n < end {
            let b = (end - n).min(BATCH as u64) as usize;
            for k in 0..b {
                fill_source(self.sigma, &self.aperture, RngStream::new(self.seed, n + k as u64), &mut inputs[k * np..(k + 1) * np]);
            }
            self.reference_kernel
                .apply_intensity_batch(&inputs[..b * np], b, &mut scratch, &mut out[..b * nq]);
            for k in 0..b {
                let field = &inputs[k * np..(k + 1) * np];
                let (mut re, mut im) = (0.0, 0.0);
                for &p in &self.aperture {
                    let (w, e) = (self.bucket_weights[p], field[p]);
                    re += w.re * e.re - w.im * e.im;
                    im += w.re * e.im + w.im * e.re;
                }
                let i1 = re * re + im * im;
                let i2 = &out[k * nq..(k + 1) * nq];
                acc.update_raw(i1, i2)?;
                if let Some(r) = records.as_deref_mut() {
                    r.push(i1, i2);
                }
            }
            n += b as u64;
        }
        Ok(())
    }

    /// Error of the reconstruction held in `acc` against the reference.
    pub fn checkpoint(&self, acc: &CorrelationAccumulator) -> Result<(Checkpoint, RealPattern)> {
        evaluate(acc, self.window, &self.bands, &self.reference_normalized)
    }

    pub fn reference_normalized(&self) -> &[f64] {
        &self.reference_normalized
    }

    fn record_header(&self, config: &ExperimentConfig) -> RecordHeader {
        RecordHeader {
            grid: *self.detector_grid(),
            wavelength: config.wavelength,
            d1: config.d1,
            d2: config.d2,
            d: config.d,
            seed: self.seed,
            count: 0,
        }
    }
}

fn evaluate(acc: &CorrelationAccumulator, window: Window, bands: &BandSplit, reference: &[f64]) -> Result<(Checkpoint, RealPattern)> {
    let g = acc.finalize()?;
    let normalized = normalize_unit(g.samples(), window)?;
    // band indices are absolute; lay the windowed vectors back onto the grid
    let mut y_hat = vec![0.0; g.len()];
    let mut y = vec![0.0; g.len()];
    y_hat[window.range()].copy_from_slice(&normalized);
    y[window.range()].copy_from_slice(reference);
    let e = band_errors(&y_hat, &y, window, bands);
    Ok((Checkpoint::from_errors(acc.count(), e), g))
}

fn pattern_rows(g: &RealPattern, window: Window, reference: Option<&[f64]>) -> Result<Vec<PatternRow>> {
    let normalized = normalize_unit(g.samples(), window)?;
    Ok(g.samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let inside = window.range().contains(&i);
            PatternRow {
                index: i,
                x: g.grid().x.coordinate(i),
                g: v,
                normalized: inside.then(|| normalized[i - window.m]),
                reference: if inside { reference.map(|r| r[i - window.m]) } else { None },
            }
        })
        .collect())
}

fn curve_rows(curve: &ConvergenceCurve) -> Vec<CurveRow> {
    curve
        .checkpoints
        .iter()
        .map(|c| CurveRow {
            n: c.n,
            eps_global: c.eps_global,
            eps_low: c.eps_low,
            eps_high: c.eps_high,
        })
        .collect()
}

fn pattern_file(n: u64) -> String {
    format!("pattern_N{n}.csv")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConvergeOutput {
    pub curve: ConvergenceCurve,
    /// Raw `G` at every checkpoint.
    pub patterns: Vec<RealPattern>,
    pub reference_normalized: Vec<f64>,
    pub window: Window,
    pub warnings: Vec<String>,
}

impl ConvergeOutput {
    /// Min-max normalized reconstruction over the window at checkpoint `k`.
    pub fn normalized(&self, k: usize) -> Result<Vec<f64>> {
        normalize_unit(self.patterns[k].samples(), self.window)
    }
}

/// Runs the single-φ convergence experiment. With `out_dir`, writes one pattern per
/// checkpoint, `curve.csv`, `manifest.json` and, if `record`, `records.gidat`.
pub fn run_converge(config: &ExperimentConfig, out_dir: Option<&Path>, record: bool) -> Result<ConvergeOutput> {
    let setup = GhostSetup::new(config, config.source.phi, config.seed)?;
    for w in &setup.warnings {
        warn!("{w}");
    }
    info!(
        "converge: phi = {:.4e} m, kappa = {:.3}, {} source samples in aperture",
        setup.phi,
        setup.kappa,
        setup.aperture_len()
    );
    let schedule = config.schedule.values(config.n_max)?;
    let pool = thread_pool(config.workers)?;
    let mut engine = ChunkedAccumulator::new(*setup.detector_grid());
    let mut writer = match (out_dir, record) {
        (Some(dir), true) => {
            ensure_dir(dir)?;
            Some(RecordWriter::create(&dir.join("records.gidat"), setup.record_header(config))?)
        }
        _ => None,
    };
    let mut curve = ConvergenceCurve::new(output::config_hash(config)?);
    let mut patterns = Vec::new();
    for &n in &schedule {
        let recs = engine.advance(n, &pool, writer.is_some(), &|s, e, acc: &mut CorrelationAccumulator, r: Option<&mut RecordBuffer>| {
            setup.produce(s, e, acc, r)
        })?;
        if let (Some(w), Some(recs)) = (writer.as_mut(), recs) {
            let p = setup.detector_grid().len();
            for (k, &i1) in recs.i1.iter().enumerate() {
                w.push(i1, &recs.i2[k * p..(k + 1) * p])?;
            }
        }
        let (c, g) = setup.checkpoint(&engine.current()?)?;
        info!("N = {n}: eps = {:.5} (low {:.5}, high {:.5})", c.eps_global, c.eps_low, c.eps_high);
        curve.push(c)?;
        patterns.push(g);
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let result = ConvergeOutput {
        curve,
        patterns,
        reference_normalized: setup.reference_normalized.clone(),
        window: setup.window,
        warnings: setup.warnings.clone(),
    };
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let mut manifest = Manifest::new("converge", config)?;
        manifest.warnings = result.warnings.clone();
        for (g, c) in result.patterns.iter().zip(&result.curve.checkpoints) {
            let name = pattern_file(c.n);
            output::write_csv(&dir.join(&name), pattern_rows(g, result.window, Some(&result.reference_normalized))?)?;
            manifest.outputs.push(name);
        }
        output::write_csv(&dir.join("curve.csv"), curve_rows(&result.curve))?;
        manifest.outputs.push("curve.csv".into());
        if record {
            manifest.outputs.push("records.gidat".into());
        }
        manifest.write(dir)?;
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub checkpoints: Vec<u64>,
    pub patterns: Vec<RealPattern>,
    /// Present when a configuration supplied the reference.
    pub curve: Option<ConvergenceCurve>,
}

/// Rebuilds patterns from a record file using the same chunk plan as live runs, so
/// the result at each checkpoint is bitwise identical to the live one. Without a
/// schedule only the final count is evaluated. A configuration, when given,
/// supplies the error window and reference for `curve.csv`.
pub fn replay(records: &Path, config: Option<&ExperimentConfig>, schedule: Option<Vec<u64>>, workers: usize, out_dir: Option<&Path>) -> Result<ReplayOutput> {
    let file = read_records(records)?;
    if file.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, have: 0 });
    }
    let grid = file.header.grid;
    let count = file.header.count;
    let checkpoints: Vec<u64> = match schedule {
        Some(s) => s.into_iter().filter(|&n| n <= count).collect(),
        None => vec![count],
    };
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument(format!("no checkpoint within the {count} stored records")));
    }
    let (window, reference, bands) = match config {
        Some(c) => {
            if !c.detector_grid()?.matches(&grid) {
                return Err(Error::GridMismatch("record grid differs from the configured detector".into()));
            }
            let w = c.window()?;
            let r = normalize_unit(reference_pattern(c)?.samples(), w)?;
            (w, Some(r), Some(split_bands(grid.len(), w)?))
        }
        None => (Window::full(grid.len())?, None, None),
    };
    let pool = thread_pool(workers)?;
    let mut engine = ChunkedAccumulator::new(grid);
    let producer = |s: u64, e: u64, acc: &mut CorrelationAccumulator, _: Option<&mut RecordBuffer>| -> Result<()> {
        replay_range(&file, s, e, acc)
    };
    let mut patterns = Vec::new();
    let mut curve = config.map(|c| output::config_hash(c).map(ConvergenceCurve::new)).transpose()?;
    for &n in &checkpoints {
        engine.advance(n, &pool, false, &producer)?;
        let acc = engine.current()?;
        match (&mut curve, &reference, &bands) {
            (Some(curve), Some(r), Some(b)) => {
                let (c, g) = evaluate(&acc, window, b, r)?;
                curve.push(c)?;
                patterns.push(g);
            }
            _ => patterns.push(acc.finalize()?),
        }
    }
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        for (g, &n) in patterns.iter().zip(&checkpoints) {
            output::write_csv(&dir.join(pattern_file(n)), pattern_rows(g, window, reference.as_deref())?)?;
        }
        if let Some(curve) = &curve {
            output::write_csv(&dir.join("curve.csv"), curve_rows(curve))?;
        }
    }
    Ok(ReplayOutput {
        checkpoints,
        patterns,
        curve,
    })
}

fn replay_range(file: &OfflineRecordFile, start: u64, end: u64, acc: &mut CorrelationAccumulator) -> Result<()> {
    for n in start as usize..end as usize {
        acc.update_raw(file.i1[n], file.pattern(n))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct KappaPoint {
    pub phi: f64,
    pub kappa: f64,
    pub seed: u64,
    pub search: ThresholdSearch,
    pub low_len: usize,
    pub high_len: usize,
}

/// Lazily runs one φ through the schedule until the threshold is decided.
pub fn threshold_search(config: &ExperimentConfig, phi: f64, seed: u64, schedule: &[u64], pool: &rayon::ThreadPool) -> Result<KappaPoint> {
    let setup = GhostSetup::new(config, phi, seed)?;
    for w in &setup.warnings {
        warn!("phi = {phi:.4e}: {w}");
    }
    let mut engine = ChunkedAccumulator::new(*setup.detector_grid());
    let checkpoints = schedule.iter().map(|&n| -> Result<Checkpoint> {
        engine.advance(n, pool, false, &|s, e, acc: &mut CorrelationAccumulator, r: Option<&mut RecordBuffer>| {
            setup.produce(s, e, acc, r)
        })?;
        let (c, _) = setup.checkpoint(&engine.current()?)?;
        Ok(c)
    });
    let search = min_n_to_threshold(checkpoints, config.tau, config.n_max)?;
    info!(
        "phi = {phi:.4e} m, kappa = {:.3}: {:?} after {} checkpoints",
        setup.kappa,
        search.outcome.n_star(),
        search.checkpoints.len()
    );
    Ok(KappaPoint {
        phi,
        kappa: setup.kappa,
        seed,
        search,
        low_len: setup.bands.low_len(),
        high_len: setup.bands.high.len(),
    })
}

/// Threshold search for every φ in the list. Each φ draws from its own stream family
/// derived from the configured seed and its list position.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<KappaPoint>> {
    if config.source.phi_list.len() < 2 {
        return Err(Error::Config("a sweep needs at least two aperture widths".into()));
    }
    let schedule = config.schedule.values(config.n_max)?;
    let pool = thread_pool(config.workers)?;
    config
        .source
        .phi_list
        .iter()
        .enumerate()
        .map(|(lane, &phi)| threshold_search(config, phi, RngStream::derive_seed(config.seed, lane as u64), &schedule, &pool))
        .collect()
}

fn final_checkpoint(p: &KappaPoint) -> Option<Checkpoint> {
    match &p.search.outcome {
        ThresholdOutcome::Reached { at, .. } => Some(*at),
        ThresholdOutcome::NotReached { last, .. } => *last,
    }
}

pub fn kappa_rows(points: &[KappaPoint]) -> Vec<KappaRow> {
    points
        .iter()
        .map(|p| {
            let c = final_checkpoint(p);
            let (reached, n_star, stable) = match &p.search.outcome {
                ThresholdOutcome::Reached { n_star, stable, .. } => (true, Some(*n_star), *stable),
                ThresholdOutcome::NotReached { .. } => (false, None, None),
            };
            KappaRow {
                phi: p.phi,
                kappa: p.kappa,
                seed: p.seed,
                reached,
                n_star,
                stable,
                n_last: p.search.checkpoints.last().map_or(0, |c| c.n),
                eps_global: c.map_or(f64::NAN, |c| c.eps_global),
                eps_low: c.map_or(f64::NAN, |c| c.eps_low),
                eps_high: c.map_or(f64::NAN, |c| c.eps_high),
            }
        })
        .collect()
}

/// Band report rows at the threshold checkpoint (or the last one when not reached).
/// Fails if any row breaks the partition identity beyond 1e-12.
pub fn band_rows(points: &[KappaPoint]) -> Result<Vec<BandRow>> {
    points
        .iter()
        .filter_map(|p| final_checkpoint(p).map(|c| (p, c)))
        .map(|(p, c)| {
            let total = (p.low_len + p.high_len) as f64;
            let lhs = total * c.eps_global * c.eps_global;
            let rhs = p.low_len as f64 * c.eps_low * c.eps_low + p.high_len as f64 * c.eps_high * c.eps_high;
            if (lhs - rhs).abs() > 1e-12 * lhs.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!(
                    "band partition identity violated at phi = {}: {lhs} vs {rhs}",
                    p.phi
                )));
            }
            Ok(BandRow {
                phi: p.phi,
                kappa: p.kappa,
                seed: p.seed,
                reached: p.search.outcome.n_star().is_some(),
                n: c.n,
                eps_global: c.eps_global,
                eps_low: c.eps_low,
                eps_high: c.eps_high,
                low_len: p.low_len,
                high_len: p.high_len,
            })
        })
        .collect()
}

pub fn run_kappa_sweep(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<KappaPoint>> {
    let points = sweep(config)?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        output::write_csv(&dir.join("kappa.csv"), kappa_rows(&points))?;
        let mut m = Manifest::new("sweep-kappa", config)?;
        m.outputs.push("kappa.csv".into());
        m.write(dir)?;
    }
    Ok(points)
}

pub fn run_bands(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<BandRow>> {
    let rows = band_rows(&sweep(config)?)?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        output::write_csv(&dir.join("bands.csv"), rows.iter().cloned())?;
        let mut m = Manifest::new("bands", config)?;
        m.outputs.push("bands.csv".into());
        m.write(dir)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SpecklePoint {
    pub phi: f64,
    pub coherence_length: f64,
    pub fwhm_x: f64,
    pub fwhm_y: f64,
    pub mu2_reference: f64,
    pub snapshot: RealPattern,
    pub coherence: RealPattern,
}

impl SpecklePoint {
    pub fn fwhm(&self) -> f64 {
        (self.fwhm_x + self.fwhm_y) / 2.0
    }
}

/// Speckle and coherence width in 2D for one aperture, over `realizations`.
pub fn speckle_point(config: &ExperimentConfig, phi: f64, seed: u64, realizations: u64, pool: &rayon::ThreadPool) -> Result<SpecklePoint> {
    let s = &config.speckle;
    let grid = Grid::new_2d((s.points, s.points), (s.pitch, s.pitch))?;
    let out_grid = fft_output_grid(&grid, s.distance, config.wavelength)?;
    let kernel = fresnel_kernel(&grid, &out_grid, s.distance, config.wavelength, KernelForm::FftOneStep)?;
    // Chirp aliasing across the source plane only rotates each independent,
    // uniformly distributed source phase, so the speckle statistics are unaffected.
    for w in validate_sampling(&kernel) {
        info!("speckle kernel: {w}");
    }
    let spec = SourceSpec::new(grid, phi, config.wavelength).with_sigma2(config.sigma2);
    debug_assert_eq!(spec.aperture_shape, ApertureShape::Disk);
    spec.validate()?;
    let aperture = spec.aperture_indices();
    let sigma = config.sigma2.sqrt();
    let reference_pixel = out_grid.nearest_flat_index(0.0, 0.0);
    let produce = |start: u64, end: u64, acc: &mut CorrelationAccumulator, _: Option<&mut RecordBuffer>| -> Result<()> {
        let mut src = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut out = vec![0.0; out_grid.len()];
        let mut scratch = (Vec::new(), Vec::new());
        for n in start..end {
            fill_source(sigma, &aperture, RngStream::new(seed, n), &mut src);
            kernel.apply_intensity_into(&src, &mut scratch, &mut out);
            acc.update_raw(out[reference_pixel], &out)?;
        }
        Ok(())
    };
    let mut snapshot = vec![0.0; out_grid.len()];
    kernel.apply_intensity_into(
        sample_source(&spec, RngStream::new(seed, 0))?.samples(),
        &mut (Vec::new(), Vec::new()),
        &mut snapshot,
    );
    let mut engine = ChunkedAccumulator::new(out_grid);
    engine.advance(realizations, pool, false, &produce)?;
    let coherence = coherence_map(&engine.current()?)?;
    let (ix, iy) = (reference_pixel % s.points, reference_pixel / s.points);
    let fwhm_x = half_width(&coherence.row(iy)?)?;
    let fwhm_y = half_width(&coherence.column(ix)?)?;
    let lc = coherence_length(config.wavelength, s.distance, phi);
    info!(
        "speckle phi = {phi:.4e} m: fwhm {:.4e} / {:.4e} m vs l_c {lc:.4e} m",
        fwhm_x, fwhm_y
    );
    Ok(SpecklePoint {
        phi,
        coherence_length: lc,
        fwhm_x,
        fwhm_y,
        mu2_reference: coherence.samples()[reference_pixel],
        snapshot: RealPattern::new(out_grid, snapshot)?,
        coherence,
    })
}

fn map_rows(p: &RealPattern) -> Vec<MapRow> {
    let nx = p.grid().x.points;
    p.samples()
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let (x, y) = p.grid().position(i);
            MapRow {
                ix: i % nx,
                iy: i / nx,
                x,
                y,
                value,
            }
        })
        .collect()
}

pub fn run_speckle(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<SpecklePoint>> {
    config.validate()?;
    let pool = thread_pool(config.workers)?;
    let points: Vec<SpecklePoint> = config
        .speckle
        .phi_list
        .iter()
        .enumerate()
        .map(|(lane, &phi)| {
            speckle_point(config, phi, RngStream::derive_seed(config.seed, lane as u64), config.speckle.realizations, &pool)
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let mut m = Manifest::new("speckle", config)?;
        for (k, p) in points.iter().enumerate() {
            for (kind, pattern) in [("intensity", &p.snapshot), ("coherence", &p.coherence)] {
                let name = format!("speckle_phi{k}_{kind}.csv");
                output::write_csv(&dir.join(&name), map_rows(pattern))?;
                m.outputs.push(name);
            }
        }
        let rows = points.iter().map(|p| SpeckleRow {
            phi: p.phi,
            coherence_length: p.coherence_length,
            fwhm_x: p.fwhm_x,
            fwhm_y: p.fwhm_y,
            fwhm: p.fwhm(),
            ratio: p.fwhm() / p.coherence_length,
            mu2_reference: p.mu2_reference,
            realizations: config.speckle.realizations,
        });
        output::write_csv(&dir.join("speckle.csv"), rows)?;
        m.outputs.push("speckle.csv".into());
        m.write(dir)?;
    }
    Ok(points)
}

/// Output directory default used by the command line.
pub fn default_out_dir(command: &str) -> PathBuf {
    PathBuf::from("out").join(command)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Schedule;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.source.points = 400;
        c.source.phi = c.phi_for_kappa(4.0);
        c.source.phi_list = vec![c.phi_for_kappa(3.0), c.phi_for_kappa(4.0)];
        c.detector.points = 64;
        c.detector.pitch = 6e-6;
        c.schedule = Schedule::Explicit { values: vec![500, 1500, 2600] };
        c
    }

    #[test]
    fn folded_test_arm_matches_full_chain() {
        let c = small_config();
        let setup = GhostSetup::new(&c, c.source.phi, 11).unwrap();
        let mut acc = CorrelationAccumulator::new(*setup.detector_grid());
        let mut recs = RecordBuffer::default();
        setup.produce(0, 20, &mut acc, Some(&mut recs)).unwrap();
        for n in 0..20 {
            let (i1, i2) = setup.run_realization(n as u64).unwrap();
            let fast = recs.i1[n];
            assert!((fast - i1).abs() <= 1e-10 * i1.abs().max(1e-300), "{n}: {fast} vs {i1}");
            assert_eq!(&recs.i2[n * 64..(n + 1) * 64], i2.samples());
        }
    }

    #[test]
    fn dark_mask_gives_zero_bucket() {
        let dir = tempfile::tempdir().unwrap();
        let mask = dir.path().join("dark.txt");
        std::fs::write(&mask, "0\n".repeat(50)).unwrap();
        let mut c = small_config();
        c.object = ObjectConfig::MaskFile {
            path: mask,
            points: 50,
            pitch: 2e-6,
            feature_size: 20e-6,
        };
        // a dark object has no reference pattern to normalize against
        assert!(GhostSetup::new(&c, c.source.phi, 1).is_err());
        let (_, mask) = object_grid_and_mask(&c).unwrap();
        assert!(mask.samples().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn converge_replay_and_worker_independence() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config();
        let one = run_converge(&c, Some(&dir.path().join("w1")), true).unwrap();
        c.workers = 3;
        let three = run_converge(&c, Some(&dir.path().join("w3")), false).unwrap();
        assert_eq!(one.curve, three.curve);
        for name in ["pattern_N2600.csv", "curve.csv", "pattern_N500.csv"] {
            let a = std::fs::read(dir.path().join("w1").join(name)).unwrap();
            let b = std::fs::read(dir.path().join("w3").join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let sched = c.schedule.values(c.n_max).unwrap();
        let r = replay(&dir.path().join("w1/records.gidat"), Some(&c), Some(sched), 2, Some(&dir.path().join("replay"))).unwrap();
        assert_eq!(r.patterns, one.patterns);
        assert_eq!(r.curve.unwrap().checkpoints, one.curve.checkpoints);
        for name in ["pattern_N2600.csv", "curve.csv"] {
            let a = std::fs::read(dir.path().join("w1").join(name)).unwrap();
            let b = std::fs::read(dir.path().join("replay").join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        // without a schedule the replay ends at the stored count
        let last = replay(&dir.path().join("w1/records.gidat"), None, None, 1, None).unwrap();
        assert_eq!(last.checkpoints, vec![2600]);
        assert_eq!(last.patterns[0], one.patterns[2]);
    }

    #[test]
    fn single_checkpoint_schedule() {
        let mut c = small_config();
        c.schedule = Schedule::Explicit { values: vec![1000] };
        let out = run_converge(&c, None, false).unwrap();
        assert_eq!(out.curve.checkpoints.len(), 1);
    }

    #[test]
    fn tau_one_stops_at_first_checkpoint() {
        let mut c = small_config();
        c.tau = 1.0;
        let pts = sweep(&c).unwrap();
        for p in &pts {
            assert_eq!(p.search.outcome.n_star(), Some(500));
        }
        let rows = band_rows(&pts).unwrap();
        assert_eq!(rows.len(), 2);
        let k = kappa_rows(&pts);
        assert!((k[1].kappa - c.kappa_for(c.source.phi_list[1])).abs() < 1e-12);
    }

    #[test]
    fn sweep_kappa_column_matches_arithmetic() {
        let c = ExperimentConfig::default();
        for (phi, expect) in [(1720e-6, 5.658), (1840e-6, 6.052)] {
            let direct = crate::analyze::kappa(105e-6, coherence_length(0.532e-6, 0.06, phi));
            assert_eq!(c.kappa_for(phi), direct);
            assert!((direct - expect).abs() < 2e-3);
        }
    }

    #[test]
    fn sweep_needs_two_apertures() {
        let mut c = small_config();
        c.source.phi_list.truncate(1);
        assert!(sweep(&c).is_err());
    }

    #[test]
    fn mean_reference_intensity_has_no_fringes() {
        let c = small_config();
        let setup = GhostSetup::new(&c, c.source.phi, 3).unwrap();
        let mut acc = CorrelationAccumulator::new(*setup.detector_grid());
        setup.produce(0, 10_000, &mut acc, None).unwrap();
        let mean = acc.mean_i2().unwrap();
        let m: f64 = mean.samples().iter().sum::<f64>() / mean.len() as f64;
        // relative spread of the mean intensity stays at the Monte Carlo noise level,
        // far below the unit contrast of the fringes
        let spread = mean.samples().iter().map(|v| (v / m - 1.0).abs()).fold(0.0, f64::max);
        assert!(spread < 0.1, "{spread}");
        let g = acc.finalize().unwrap();
        let gn = normalize_unit(g.samples(), Window::full(g.len()).unwrap()).unwrap();
        let contrast = gn.iter().fold(0.0f64, |a, &v| a.max(v)) - gn.iter().fold(1.0f64, |a, &v| a.min(v));
        assert_eq!(contrast, 1.0);
    }
}
