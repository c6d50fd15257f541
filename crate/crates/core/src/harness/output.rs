//! CSV and JSON emission. Column order is fixed by the row structs; floats are
//! written in shortest round-trip form.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::config::ExperimentConfig;

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternRow {
    pub index: usize,
    pub x: f64,
    pub g: f64,
    /// Min-max normalized over the error window; empty outside it.
    pub normalized: Option<f64>,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub n: u64,
    pub eps_global: f64,
    pub eps_low: f64,
    pub eps_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaRow {
    pub phi: f64,
    pub kappa: f64,
    pub seed: u64,
    pub reached: bool,
    pub n_star: Option<u64>,
    pub stable: Option<bool>,
    pub n_last: u64,
    pub eps_global: f64,
    pub eps_low: f64,
    pub eps_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub phi: f64,
    pub kappa: f64,
    pub seed: u64,
    pub reached: bool,
    pub n: u64,
    pub eps_global: f64,
    pub eps_low: f64,
    pub eps_high: f64,
    pub low_len: usize,
    pub high_len: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeckleRow {
    pub phi: f64,
    pub coherence_length: f64,
    pub fwhm_x: f64,
    pub fwhm_y: f64,
    pub fwhm: f64,
    pub ratio: f64,
    pub mu2_reference: f64,
    pub realizations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapRow {
    pub ix: usize,
    pub iy: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub software: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(Manifest {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.seed,
            workers: config.workers,
            config_hash: config_hash(config)?,
            config: config.clone(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// SHA-256 of the canonical TOML rendering, ignoring the worker count, which never
/// affects results.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = ExperimentConfig {
        workers: 1,
        ..config.clone()
    };
    let digest = Sha256::digest(canonical.to_toml_string()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
