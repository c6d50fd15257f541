use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ghostconv::harness::experiments::{default_out_dir, kappa_rows};
use ghostconv::harness::{self, ExperimentConfig, Schedule};

#[derive(Parser)]
#[command(name = "ghostconv", version, about = "Ghost interference Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Speckle snapshots and coherence widths in 2D for each aperture.
    Speckle(Common),
    /// Convergence of the reconstruction along the checkpoint schedule.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Also store every realization in records.gidat.
        #[arg(long)]
        records: bool,
    },
    /// Minimal N to reach the threshold for each aperture in the list.
    SweepKappa(Common),
    /// Low/high band errors at the threshold for each aperture in the list.
    Bands(Common),
    /// Rebuild patterns from a record file.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    /// `1000,2000,4000`, `doubling:1000:7`, `geometric:1000:4` or `arithmetic:1000:500`.
    #[arg(long)]
    schedule: Option<String>,
    /// Aperture widths in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    phi_list: Option<Vec<f64>>,
    /// Allow d != d1 + d2.
    #[arg(long)]
    override_geometry: bool,
}

impl Common {
    /// Configuration with command-line overrides applied and validated.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load_unvalidated(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(t) = self.tau {
            c.tau = t;
        }
        if let Some(s) = &self.schedule {
            c.schedule = Schedule::parse(s)?;
        }
        if let Some(l) = &self.phi_list {
            c.source.phi_list = l.clone();
            c.speckle.phi_list = l.clone();
        }
        if self.override_geometry {
            c.override_geometry = true;
        }
        c.validate()?;
        Ok(c)
    }

    fn out_dir(&self, command: &str) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| default_out_dir(command))
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Speckle(common) => {
            let c = common.config()?;
            let dir = common.out_dir("speckle");
            for p in harness::run_speckle(&c, Some(&dir))? {
                println!(
                    "phi {:.4e} m  fwhm {:.4e} m  l_c {:.4e} m  ratio {:.3}  |mu|^2(0) {:.4}",
                    p.phi,
                    p.fwhm(),
                    p.coherence_length,
                    p.fwhm() / p.coherence_length,
                    p.mu2_reference
                );
            }
            info!("wrote {}", dir.display());
        }
        Command::Converge { common, records } => {
            let c = common.config()?;
            let dir = common.out_dir("converge");
            let out = harness::run_converge(&c, Some(&dir), records)?;
            for cp in &out.curve.checkpoints {
                println!("N {:>9}  eps {:.5}  low {:.5}  high {:.5}", cp.n, cp.eps_global, cp.eps_low, cp.eps_high);
            }
            info!("wrote {}", dir.display());
        }
        Command::SweepKappa(common) => {
            let c = common.config()?;
            let dir = common.out_dir("sweep-kappa");
            let pts = harness::run_kappa_sweep(&c, Some(&dir))?;
            for r in kappa_rows(&pts) {
                match r.n_star {
                    Some(n) => println!("kappa {:.3}  N* {n}", r.kappa),
                    None => println!("kappa {:.3}  not reached by {} (eps {:.4})", r.kappa, r.n_last, r.eps_global),
                }
            }
            info!("wrote {}", dir.display());
        }
        Command::Bands(common) => {
            let c = common.config()?;
            let dir = common.out_dir("bands");
            for r in harness::run_bands(&c, Some(&dir))? {
                println!(
                    "kappa {:.3}  N {}{}  eps {:.5}  low {:.5}  high {:.5}",
                    r.kappa,
                    r.n,
                    if r.reached { "" } else { " (not reached)" },
                    r.eps_global,
                    r.eps_low,
                    r.eps_high
                );
            }
            info!("wrote {}", dir.display());
        }
        Command::Replay { common, records } => {
            let config = match &common.config {
                Some(_) => Some(common.config()?),
                None => None,
            };
            let schedule = match (&common.schedule, &config) {
                (Some(s), _) => Some(Schedule::parse(s)?.values(u64::MAX)?),
                (None, Some(c)) => Some(c.schedule.values(c.n_max)?),
                (None, None) => None,
            };
            let workers = common.workers.or(config.as_ref().map(|c| c.workers)).unwrap_or(1);
            if workers == 0 {
                bail!("workers must be at least 1");
            }
            let dir = common.out_dir("replay");
            let out = harness::replay(&records, config.as_ref(), schedule, workers, Some(&dir))?;
            println!("replayed {} checkpoints up to N = {}", out.checkpoints.len(), out.checkpoints.last().unwrap());
            info!("wrote {}", dir.display());
        }
    }
    Ok(())
}
