//! Command-line driver: one subcommand per pipeline stage, handing data
//! between stages through files under the output directory.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 missing input file,
//! 3 invalid configuration or usage, 4 `verify` found a mismatch.

pub mod config;
pub mod error;
pub mod outputs;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
use stages::Context;

#[derive(Debug, Parser)]
#[command(name = "har", version, about = "Activity recognition from wrist PPG via plotted signal windows")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, env = "HAR_CONFIG", global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; 1 runs every stage sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the configured embedding backend: stub, precomputed or onnx.
    #[arg(long, global = true)]
    pub backend: Option<config::BackendKind>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the seeded synthetic dataset.
    Synth,
    /// Read the dataset manifest and low-pass filter flagged records.
    Ingest,
    /// Cut records into overlapping windows.
    Window,
    /// Plot every window as an image.
    Rasterize,
    /// Extract 2048-d features with the configured backend.
    Embed,
    /// Fit the classifiers and run the evaluation protocol.
    Train,
    /// Write the report directory.
    Evaluate,
    /// Class activation maps for correctly classified test images.
    Cam,
    /// 2-d t-SNE embedding of the features.
    Tsne,
    /// All stages in order.
    Run,
    /// Re-hash stage outputs against their manifests.
    Verify,
}

impl Cli {
    pub fn load_config(&self) -> CliResult<PipelineConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("no configuration given (use --config or HAR_CONFIG)".into()))?;
        let mut cfg = PipelineConfig::load(path)?;
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = cli.load_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(CliError::runtime)?;
    let ctx = Context::new(cfg);
    pool.install(|| match cli.command {
        Command::Synth => ctx.synth(),
        Command::Ingest => ctx.ingest(),
        Command::Window => ctx.window(),
        Command::Rasterize => ctx.rasterize(),
        Command::Embed => ctx.embed(),
        Command::Train => ctx.train(),
        Command::Evaluate => ctx.evaluate(),
        Command::Cam => ctx.cam(),
        Command::Tsne => ctx.tsne(),
        Command::Run => ctx.run_all(),
        Command::Verify => ctx.verify().map(|n| log::info!("{n} stage manifests verified")),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::EXIT_CONFIG } else { CliError::EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => CliError::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
