mod commands;
mod config;
mod render;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use d3dp::aggregate::Aggregator;
use d3dp::posefile::load_pose3d;
use d3dp::sampler::{FlipMode, SigmaMode};

use config::{OracleKind, Overrides, RunConfig};

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn missing_gt(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }

    pub fn from_lib(e: d3dp::Error) -> Self {
        let code = match &e {
            d3dp::Error::InvalidArgument(_) | d3dp::Error::InvalidSkeleton(_) => 2,
            d3dp::Error::TrainingDiverged { .. } => 3,
            d3dp::Error::MissingGroundTruth(_) => 4,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", dir.display()),
    })
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

#[derive(Parser)]
#[command(name = "d3dp", version, about = "Diffusion-based multi-hypothesis 3D pose lifting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(Common),
    /// Train the MLP denoiser on a dataset.
    Train(Common),
    /// Sample hypotheses, aggregate them and score the result.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Run without ground truth (production mode).
        #[arg(long)]
        no_gt: bool,
    },
    /// Sweep hypotheses and iterations and write one CSV row per cell.
    Bench(Common),
    /// Draw poses as SVG, one file per frame.
    Render {
        #[command(flatten)]
        common: Common,
        /// Ground-truth pose file.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Hypothesis pose files.
        #[arg(long = "hypothesis")]
        hypothesis_files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000.0)]
        width: f64,
        #[arg(long, default_value_t = 1000.0)]
        height: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hypotheses: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated list of avg, ppma, jpma, pbest, jbest.
    #[arg(long = "aggregator", value_delimiter = ',')]
    aggregators: Option<Vec<Aggregator>>,
    #[arg(long, value_enum)]
    oracle: Option<OracleKind>,
    #[arg(long, value_enum)]
    flip: Option<FlipArg>,
    #[arg(long, value_enum)]
    sigma_mode: Option<SigmaArg>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write the noise schedule to `<out>/schedule.csv`.
    #[arg(long)]
    dump_schedule: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlipArg {
    None,
    Once,
    Diffusion,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Paper,
    Deterministic,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            hypotheses: self.hypotheses,
            iterations: self.iterations,
            aggregators: self.aggregators.clone(),
            oracle: self.oracle,
            flip: self.flip.map(|f| match f {
                FlipArg::None => FlipMode::None,
                FlipArg::Once => FlipMode::Once,
                FlipArg::Diffusion => FlipMode::Diffusion,
            }),
            sigma_mode: self.sigma_mode.map(|m| match m {
                SigmaArg::Paper => SigmaMode::Paper,
                SigmaArg::Deterministic => SigmaMode::Deterministic,
            }),
            checkpoint: self.checkpoint.clone(),
        };
        let cfg = RunConfig::load(self.config.as_deref(), &overrides)?;
        if self.dump_schedule {
            commands::dump_schedule(&cfg)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(c) => commands::cmd_gen(&c.load()?),
        Command::Train(c) => commands::cmd_train(&c.load()?),
        Command::Infer { common, no_gt } => commands::cmd_infer(&common.load()?, !no_gt),
        Command::Bench(c) => commands::cmd_bench(&c.load()?),
        Command::Render {
            common,
            gt,
            hypothesis_files,
            width,
            height,
        } => {
            let cfg = common.load()?;
            let read = |p: &Path| load_pose3d(p).map_err(Failure::from_lib);
            let gt = gt.as_deref().map(read).transpose()?;
            let hyps = hypothesis_files.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
            let written = commands::cmd_render(&cfg, gt.as_ref(), &hyps, (width, height))?;
            println!("wrote {written} SVG files to {}", cfg.out.join("render").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
