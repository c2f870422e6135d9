//! Command-line driver: fit sparse constitutive models, sweep
//! regularization/architecture grids, and evaluate trained checkpoints
//! into plot-ready CSVs.
//!
//! Exit codes: 0 success, 1 runtime error (with a machine-readable error
//! JSON on stderr), 2 usage error. `CONSPARSE_THREADS` caps parallel
//! training workers.

mod artifacts;
mod evalcmd;
mod fit;
mod sweep;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "consparse",
    version,
    about = "Sparse constitutive model discovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one problem/dataset pair and export model, logs, and expression.
    Fit(FitArgs),
    /// Grid of (lambda, architecture, seed) fits with a summary CSV.
    Sweep(SweepArgs),
    /// Evaluate a checkpoint into response curves.
    Eval(EvalArgs),
    /// List the embedded dataset registry.
    Datasets,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Problem family: hyper-compressible | hyper-incompressible | yield | hardening.
    #[arg(long)]
    problem: String,
    /// Embedded dataset name (see `datasets`), or a synthetic spec for
    /// hyper-compressible via --law.
    #[arg(long)]
    data: Option<String>,
    /// CSV file with user data (schema depends on the problem).
    #[arg(long)]
    csv: Option<std::path::PathBuf>,
    /// Ground-truth law for synthetic compressible data.
    #[arg(long)]
    law: Option<String>,
    /// Half-width of the synthetic deformation-gradient box.
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 50)]
    n_train: usize,
    /// Seed of the synthetic sampler.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Modes used for training (incompressible), e.g. UT,ET.
    #[arg(long)]
    train_modes: Option<String>,
    /// Modes held out for testing, e.g. PS.
    #[arg(long)]
    test_modes: Option<String>,
    /// Regularization weight (parsed from scientific notation).
    #[arg(long, default_value = "1e-3")]
    lambda: String,
    #[arg(long, default_value_t = 20_000)]
    epochs: usize,
    /// Number of random seeds (0..n); the median final-loss run is kept.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "30")]
    hidden: String,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    mc_samples: usize,
    /// Train fraction of the shuffled split.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Train on all rows (no validation split).
    #[arg(long)]
    no_split: bool,
    #[arg(long, default_value_t = 5.0)]
    gate_lr_scale: f64,
    /// Disable data-derived input scaling.
    #[arg(long)]
    no_input_scale: bool,
    #[arg(long, default_value_t = 50)]
    log_every: usize,
    /// Yield-surface origin anchor weight.
    #[arg(long, default_value_t = 1.0)]
    anchor_weight: f64,
    /// R(0) = 1 penalty weight for hardening.
    #[arg(long, default_value_t = 1e3)]
    r0_weight: f64,
    /// Young's modulus in MPa (hardening; defaults per known datasets).
    #[arg(long)]
    e_modulus: Option<f64>,
    /// Poisson ratio (hardening).
    #[arg(long)]
    nu: Option<f64>,
    /// Initial yield stress in MPa (hardening).
    #[arg(long)]
    sigma_y: Option<f64>,
    /// Trapezoid panels for torsion rows in the training loss.
    #[arg(long, default_value_t = 20)]
    torsion_quad: usize,
    /// Output directory.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    base: FitArgs,
    /// Comma-separated regularization weights, e.g. 1e-5,1e-4,1e-3.
    #[arg(long)]
    lambdas: String,
    /// Semicolon-separated architectures of comma-separated widths,
    /// e.g. "30;30,30;30,30,30".
    #[arg(long, default_value = "30")]
    archs: String,
    /// Held-out test points for synthetic compressible sweeps.
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    /// Test-region half-width.
    #[arg(long, default_value_t = 0.3)]
    delta_test: f64,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Checkpoint JSON produced by `fit`.
    #[arg(long)]
    checkpoint: std::path::PathBuf,
    /// Sweep range start:stop:count (F11 for compressible, stretch or
    /// shear for incompressible modes, strain fraction for hardening).
    #[arg(long)]
    range: Option<String>,
    /// Modes to evaluate for incompressible checkpoints, e.g. UT,ET,PS.
    #[arg(long)]
    modes: Option<String>,
    /// Rays for yield-surface evaluation.
    #[arg(long, default_value_t = 72)]
    rays: usize,
    /// Trapezoid panels for torsion curves.
    #[arg(long, default_value_t = 100)]
    torsion_quad: usize,
    /// Output directory.
    #[arg(long)]
    out: std::path::PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Eval(args) => evalcmd::run(&args),
        Command::Datasets => {
            for name in consparse::data::REGISTRY {
                println!("{name}");
            }
            Ok(())
        }
    };
    if let Err(err) = result {
        eprintln!("{}", artifacts::error_json(&err));
        std::process::exit(1);
    }
}
