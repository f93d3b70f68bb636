use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;

/// Tree-structured model recovery from noisy samples.
#[derive(Parser, Debug)]
#[command(name = "noisytree", version)]
struct Cli {
    /// Worker threads for sweeps and grids (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a model and noise assignment from the first setting of a sweep config.
    GenModel(GenModelArgs),
    /// Draw noisy samples from a model file.
    Sample(SampleArgs),
    /// Recover the tree from a model (population mode) or a sample file.
    Recover(RecoverArgs),
    /// Chow-Liu baseline on the same inputs as `recover`.
    Chowliu(RecoverArgs),
    /// Monte-Carlo sweep of recovery accuracy.
    Sweep(SweepArgs),
    /// Leaf-vs-middle center test over a (k, alpha, delta, q) grid.
    Identifiability(GridArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenModelArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Noise file written by `gen-model`; omitted means noiseless.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long, short = 'n')]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `samples.csv`.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RecoverArgs {
    /// Model file. Required for `--exact-pmf`; otherwise used to score the output.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Binary sample file written by `sample`.
    #[arg(long = "samples")]
    pub samples_file: Option<PathBuf>,
    /// Use exact noisy pairwise PMFs from the model instead of samples.
    #[arg(long)]
    pub exact_pmf: bool,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub q_max: Option<f64>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub threshold_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run every trial on exact noisy PMFs (one row per setting, N = 0).
    #[arg(long)]
    pub exact_pmf: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::GenModel(a) => commands::gen_model(a),
        Command::Sample(a) => commands::sample(a),
        Command::Recover(a) => commands::recover(a, false),
        Command::Chowliu(a) => commands::recover(a, true),
        Command::Sweep(a) => commands::sweep(a),
        Command::Identifiability(a) => commands::identifiability(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
