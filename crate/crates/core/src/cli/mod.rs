//! Command-line front end: argument parsing, configuration loading and
//! deterministic file emission.
//!
//! Every command writes its results plus `manifest.json` (configuration
//! hash, seed, crate version, parameters, file list) into `--out`.

pub mod commands;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::models::MimsPower;
pub use commands::*;

#[derive(Debug, Parser)]
#[command(name = "qmemsim", version, about = "Photon-echo quantum memory simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// TOML configuration; the shipped defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inversion of a pulse preset versus detuning and amplitude error.
    Pulse(PulseArgs),
    /// Storage run: timeline, ensemble dynamics, echo and efficiency.
    Memory(MemoryArgs),
    /// Fits a decay law or the efficiency surface to a CSV file.
    Fit(FitArgs),
    /// Classical bound and expected fidelity versus mean photon number.
    Bounds(BoundsArgs),
    /// Absorption profile after the rate-equation initialization.
    InitProfile(InitArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PulseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "pi43")]
    pub preset: String,
    /// Half-range of the detuning sweep (Hz); 0.4 x bandwidth by default.
    #[arg(long)]
    pub detuning: Option<f64>,
    /// Half-range of the relative amplitude error.
    #[arg(long, default_value_t = 0.1)]
    pub amplitude_error: f64,
    /// Overall amplitude factor.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MemoryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "nlpe")]
    pub protocol: Protocol,
    #[arg(long)]
    pub ions: Option<usize>,
    /// Decoupling pulse spacing (s).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<usize>,
    /// UR4 phase offset (rad).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Skip the rate-equation initialization.
    #[arg(long)]
    pub no_init: bool,
    /// Simulate photon counts for the four qubit states.
    #[arg(long)]
    pub counts: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub model: FitModel,
    #[arg(long)]
    pub data: PathBuf,
    /// Lower time limit of the tail fit (s).
    #[arg(long, default_value_t = 15.0)]
    pub t_min: f64,
    /// Whether the data are echo amplitudes or intensities.
    #[arg(long, value_enum, default_value = "amplitude")]
    pub power: PowerArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerArg {
    Amplitude,
    Intensity,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Single mean photon number; overrides the grid.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub mu_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 300)]
    pub mu_points: usize,
    /// Memory efficiency; the configured value by default.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Noise counts per detection window; the configured value by default.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct InitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seed: u64,
    parameters: &'a P,
    outputs: Vec<String>,
}

/// Collects the files written by one command.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Outputs> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn finish<P: Serialize>(mut self, command: &str, cfg: &Config, seed: u64, parameters: &P) -> Result<Vec<String>> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed,
            parameters,
            outputs: self.files.clone(),
        };
        self.json("manifest.json", &manifest)?;
        Ok(self.files)
    }
}

fn load_config(common: &CommonArgs) -> Result<(Config, u64)> {
    let cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::shipped(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

/// Runs a parsed command and returns the names of the files written.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::Pulse(a) => {
            let (cfg, seed) = load_config(&a.common)?;
            let req = PulseRequest {
                preset: a.preset.clone(),
                detuning_hz: a.detuning,
                amplitude_error: a.amplitude_error,
                points: a.points,
                amplitude: a.amplitude,
            };
            let (report, rows) = pulse_sweep(&cfg, &req)?;
            let mut out = Outputs::new(&a.common.out)?;
            out.csv("inversion.csv", &rows)?;
            out.json("report.json", &report)?;
            out.finish("pulse", &cfg, seed, a)
        }
        Command::Memory(a) => {
            let (cfg, seed) = load_config(&a.common)?;
            let req = MemoryRequest {
                protocol: a.protocol,
                seed,
                n_ions: a.ions,
                tau: a.tau,
                n_pulses: a.n_pulses,
                delta: a.delta,
                mu_q: a.mu,
                eta: a.eta,
                initialization: !a.no_init,
                counts: a.counts,
            };
            let run = memory_run(&cfg, &req)?;
            let mut out = Outputs::new(&a.common.out)?;
            let mut w = out.create("timeline.json")?;
            w.write_all(run.timeline.to_json()?.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
            run.echo.write_csv(out.create("echo.csv")?)?;
            if let Some(abs) = &run.absorption {
                abs.write_csv(out.create("absorption.csv")?)?;
            }
            for h in &run.histograms {
                h.histogram.write_csv(out.create(&format!("counts_{}.csv", h.label))?)?;
            }
            out.json("report.json", &run.report)?;
            out.finish("memory", &cfg, seed, a)
        }
        Command::Fit(a) => {
            let (cfg, seed) = load_config(&a.common)?;
            let req = FitRequest {
                model: a.model,
                data: a.data.clone(),
                t_min: a.t_min,
                power: match a.power {
                    PowerArg::Amplitude => MimsPower::Amplitude,
                    PowerArg::Intensity => MimsPower::Intensity,
                },
            };
            let (report, rows) = fit_run(&cfg, &req)?;
            let mut out = Outputs::new(&a.common.out)?;
            out.csv("curve.csv", &rows)?;
            out.json("report.json", &report)?;
            out.finish("fit", &cfg, seed, a)
        }
        Command::Bounds(a) => {
            let (cfg, seed) = load_config(&a.common)?;
            let (lo, hi, n) = match a.mu {
                Some(mu) => (mu, mu, 1),
                None => (a.mu_min, a.mu_max, a.mu_points),
            };
            let req = BoundsRequest {
                mu_min: lo,
                mu_max: hi,
                mu_points: n,
                eta: a.eta.unwrap_or(cfg.photon.eta),
                noise_per_window: a.noise.unwrap_or(cfg.photon.noise_per_window),
            };
            let (report, rows) = bounds_run(&req)?;
            let mut out = Outputs::new(&a.common.out)?;
            out.csv("bounds.csv", &rows)?;
            out.json("report.json", &report)?;
            out.finish("bounds", &cfg, seed, a)
        }
        Command::InitProfile(a) => {
            let (cfg, seed) = load_config(&a.common)?;
            let profile = initialization_profile(&cfg)?;
            let mut out = Outputs::new(&a.common.out)?;
            profile.write_csv(out.create("absorption.csv")?)?;
            out.json("report.json", &profile.feature())?;
            out.finish("init-profile", &cfg, seed, a)
        }
    }
}

/// Process exit code for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
