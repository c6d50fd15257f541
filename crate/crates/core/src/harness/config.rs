//! Experiment configuration, read from TOML. All lengths are in meters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analyze::Window;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::propagate::KernelForm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub wavelength: f64,
    /// Source to object.
    pub d1: f64,
    /// Object to bucket detector.
    pub d2: f64,
    /// Source to reference detector.
    pub d: f64,
    /// Accept `d != d1 + d2`. The ghost condition is then broken on purpose.
    pub override_geometry: bool,
    pub sigma2: f64,
    pub seed: u64,
    pub tau: f64,
    pub workers: usize,
    /// Upper bound on realizations for threshold searches.
    pub n_max: u64,
    pub source: SourceConfig,
    pub detector: DetectorConfig,
    pub object: ObjectConfig,
    pub schedule: Schedule,
    pub window: Option<WindowConfig>,
    pub speckle: SpeckleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub points: usize,
    pub pitch: f64,
    /// Aperture width for single-φ runs.
    pub phi: f64,
    /// Aperture widths for κ sweeps and band reports.
    pub phi_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub points: usize,
    pub pitch: f64,
    /// Evaluation of the reference-arm propagation sum.
    pub kernel: KernelForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectConfig {
    DoubleSlit { a: f64, b: f64, pitch: f64 },
    /// One transmission value per line, on a grid of `points` samples at `pitch`.
    MaskFile {
        path: PathBuf,
        points: usize,
        pitch: f64,
        /// Feature size used for κ.
        feature_size: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Explicit { values: Vec<u64> },
    /// `start * 2^j`.
    Doubling { start: u64, count: usize },
    /// `round(start * 2^(j / per_octave))`, unbounded up to `n_max`.
    Geometric { start: u64, per_octave: u32 },
    /// `start + j * step`, unbounded up to `n_max`.
    Arithmetic { start: u64, step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeckleConfig {
    /// Source to observation plane.
    pub distance: f64,
    pub points: usize,
    /// Source pitch; the observation pitch follows as `λ z / (points · pitch)`.
    pub pitch: f64,
    pub phi_list: Vec<f64>,
    pub realizations: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            wavelength: 0.532e-6,
            d1: 60e-3,
            d2: 75e-3,
            d: 135e-3,
            override_geometry: false,
            sigma2: 1.0,
            seed: 1,
            tau: 0.07,
            workers: 1,
            n_max: 2_000_000,
            source: SourceConfig::default(),
            detector: DetectorConfig::default(),
            object: ObjectConfig::default(),
            schedule: Schedule::default(),
            window: None,
            speckle: SpeckleConfig::default(),
        }
    }
}

impl Default for SourceConfig {
    fn default() -> Self {
        // κ = 8 with the default object and d1
        let phi = 8.0 * 0.532e-6 * 60e-3 / 105e-6;
        SourceConfig {
            points: 1280,
            pitch: 4e-6,
            phi,
            phi_list: [8.0, 10.0, 12.0, 14.0, 16.0]
                .iter()
                .map(|k| k * 0.532e-6 * 60e-3 / 105e-6)
                .collect(),
        }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            points: 256,
            pitch: 1.557e-6,
            kernel: KernelForm::ChirpZ,
        }
    }
}

impl Default for ObjectConfig {
    fn default() -> Self {
        ObjectConfig::DoubleSlit {
            a: 105e-6,
            b: 303e-6,
            pitch: 1e-6,
        }
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Doubling { start: 1000, count: 7 }
    }
}

impl Default for SpeckleConfig {
    fn default() -> Self {
        let (z, m, out_pitch) = (60e-3, 256usize, 1.557e-6);
        SpeckleConfig {
            distance: z,
            points: m,
            pitch: 0.532e-6 * z / (m as f64 * out_pitch),
            phi_list: (0..4).map(|k| 2.5e-3 / f64::from(1u32 << k)).collect(),
            realizations: 20_000,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Schedule {
    /// Checkpoints not exceeding `n_max`, strictly increasing.
    pub fn values(&self, n_max: u64) -> Result<Vec<u64>> {
        let mut out: Vec<u64> = Vec::new();
        let mut push = |n: u64| {
            if out.last().is_none_or(|&l| n > l) {
                out.push(n);
            }
        };
        match self {
            Schedule::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::Config("explicit schedule is empty".into()));
                }
                if values.windows(2).any(|w| w[1] <= w[0]) || values[0] == 0 {
                    return Err(Error::Config("schedule must be positive and strictly increasing".into()));
                }
                values.iter().copied().filter(|&n| n <= n_max).for_each(&mut push);
            }
            Schedule::Doubling { start, count } => {
                if *start == 0 {
                    return Err(Error::Config("schedule start must be positive".into()));
                }
                (0..*count)
                    .map_while(|j| start.checked_shl(j as u32).filter(|&n| n >> j == *start))
                    .take_while(|&n| n <= n_max)
                    .for_each(&mut push);
            }
            Schedule::Geometric { start, per_octave } => {
                if *start == 0 || *per_octave == 0 {
                    return Err(Error::Config("geometric schedule needs positive start and per_octave".into()));
                }
                for j in 0.. {
                    let n = (*start as f64 * 2f64.powf(j as f64 / f64::from(*per_octave))).round();
                    if n > n_max as f64 {
                        break;
                    }
                    push(n as u64);
                }
            }
            Schedule::Arithmetic { start, step } => {
                if *start == 0 || *step == 0 {
                    return Err(Error::Config("arithmetic schedule needs positive start and step".into()));
                }
                let mut n = *start;
                while n <= n_max {
                    push(n);
                    n = match n.checked_add(*step) {
                        Some(v) => v,
                        None => break,
                    };
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("no checkpoint at or below n_max = {n_max}")));
        }
        Ok(out)
    }

    /// Parses the command-line form: `1000,2000,4000`, `doubling:1000:7`,
    /// `geometric:1000:4` or `arithmetic:1000:500`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse schedule {text:?}"));
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["doubling", s, c] => Ok(Schedule::Doubling { start: num(s)?, count: num(c)? as usize }),
            ["geometric", s, p] => Ok(Schedule::Geometric {
                start: num(s)?,
                per_octave: u32::try_from(num(p)?).map_err(|_| bad())?,
            }),
            ["arithmetic", s, st] => Ok(Schedule::Arithmetic { start: num(s)?, step: num(st)? }),
            [list] => Ok(Schedule::Explicit {
                values: list.split(',').map(num).collect::<Result<_>>()?,
            }),
            _ => Err(bad()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, for callers that apply overrides first.
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::load_unvalidated(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file without validating; a relative mask path is resolved against
    /// the file's directory.
    pub fn load_unvalidated(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse_toml(&std::fs::read_to_string(path)?)?;
        if let ObjectConfig::MaskFile { path: mask, .. } = &mut cfg.object {
            if mask.is_relative() {
                if let Some(dir) = path.parent() {
                    *mask = dir.join(&*mask);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("wavelength", self.wavelength)?;
        positive("d1", self.d1)?;
        positive("d2", self.d2)?;
        positive("d", self.d)?;
        positive("sigma2", self.sigma2)?;
        positive("tau", self.tau)?;
        positive("source.pitch", self.source.pitch)?;
        positive("detector.pitch", self.detector.pitch)?;
        let sum = self.d1 + self.d2;
        if !self.override_geometry && (self.d - sum).abs() > 1e-12 * sum {
            return Err(Error::Geometry(format!(
                "reference distance d = {} m must equal d1 + d2 = {} m (set override_geometry to run anyway)",
                self.d, sum
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.source.points < 2 || self.detector.points < 2 {
            return Err(Error::Config("grids need at least two points".into()));
        }
        let extent = self.source.points as f64 * self.source.pitch;
        for &phi in std::iter::once(&self.source.phi).chain(&self.source.phi_list) {
            positive("phi", phi)?;
            if phi > extent {
                return Err(Error::Geometry(format!(
                    "aperture {phi} m exceeds the source window {extent} m"
                )));
            }
        }
        match &self.object {
            ObjectConfig::DoubleSlit { a, b, pitch } => {
                positive("object.a", *a)?;
                positive("object.b", *b)?;
                positive("object.pitch", *pitch)?;
                if b <= a {
                    return Err(Error::Config("slit separation must exceed slit width".into()));
                }
            }
            ObjectConfig::MaskFile { points, pitch, feature_size, .. } => {
                positive("object.pitch", *pitch)?;
                positive("object.feature_size", *feature_size)?;
                if *points < 2 {
                    return Err(Error::Config("mask grid needs at least two points".into()));
                }
            }
        }
        self.schedule.values(self.n_max)?;
        self.window()?;
        let s = &self.speckle;
        positive("speckle.distance", s.distance)?;
        positive("speckle.pitch", s.pitch)?;
        if s.points < 2 || s.realizations < 2 {
            return Err(Error::Config("speckle needs at least two points and two realizations".into()));
        }
        let s_extent = s.points as f64 * s.pitch;
        for &phi in &s.phi_list {
            positive("speckle phi", phi)?;
            if phi > s_extent {
                return Err(Error::Geometry(format!(
                    "speckle aperture {phi} m exceeds the source window {s_extent} m"
                )));
            }
        }
        Ok(())
    }

    pub fn source_grid(&self) -> Result<Grid> {
        Grid::new_1d(self.source.points, self.source.pitch)
    }

    pub fn detector_grid(&self) -> Result<Grid> {
        Grid::new_1d(self.detector.points, self.detector.pitch)
    }

    /// Error window on the detector; the full window unless configured.
    pub fn window(&self) -> Result<Window> {
        let w = match self.window {
            Some(WindowConfig { m, n }) => Window::new(m, n)?,
            None => Window::full(self.detector.points)?,
        };
        if w.n >= self.detector.points {
            return Err(Error::InvalidRange { m: w.m, n: w.n });
        }
        Ok(w)
    }

    pub fn feature_size(&self) -> f64 {
        match &self.object {
            ObjectConfig::DoubleSlit { a, .. } => *a,
            ObjectConfig::MaskFile { feature_size, .. } => *feature_size,
        }
    }

    /// κ for an aperture `phi`, with the coherence length taken at the object plane.
    pub fn kappa_for(&self, phi: f64) -> f64 {
        crate::analyze::kappa(
            self.feature_size(),
            crate::analyze::coherence_length(self.wavelength, self.d1, phi),
        )
    }

    /// Aperture giving `kappa`, the inverse of [`Self::kappa_for`].
    pub fn phi_for_kappa(&self, kappa: f64) -> f64 {
        kappa * self.wavelength * self.d1 / self.feature_size()
    }
}
