//! `mgmw` experiment harness.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;
use mgmw::attack::AttackMode;

#[derive(Parser, Debug)]
#[command(name = "mgmw", version, about = "Hard-label motion attacks and adversarial training")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed every stage seed is derived from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch attacks (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    attack: AttackFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct AttackFlags {
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Class to reach in targeted mode.
    #[arg(long, global = true)]
    target_class: Option<usize>,
    /// Disable manifold projection.
    #[arg(long, global = true)]
    no_mp: bool,
    #[arg(long, global = true)]
    mp_every: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// `builtin` or `extern:<command>`.
    #[arg(long, global = true)]
    classifier: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Untargeted,
    Targeted,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate the synthetic train and test sets.
    GenData,
    /// Train the built-in classifier.
    Train,
    /// Attack test motions and report metrics.
    Attack,
    /// Mixed-manifold adversarial training with robustness probes.
    MmatTrain,
    /// Gaussian-smoothing baseline for every configured σ.
    GsTrain,
    /// Metrics, confusion matrices and deviation histograms of attack runs.
    Evaluate,
    /// Aggregate tables of all artifacts in the output directory.
    Report,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Vec<String>> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| vec![e])?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    let a = &cli.attack;
    let settings = &mut cfg.attack.settings;
    let mut errors = Vec::new();
    match (a.mode, a.target_class) {
        (Some(ModeArg::Untargeted), None) => settings.mode = AttackMode::Untargeted,
        (Some(ModeArg::Untargeted), Some(_)) => {
            errors.push("--target-class: only valid with --mode targeted".to_string())
        }
        (Some(ModeArg::Targeted), Some(class)) | (None, Some(class)) => {
            settings.mode = AttackMode::Targeted { class }
        }
        (Some(ModeArg::Targeted), None) => match settings.mode {
            AttackMode::Targeted { .. } => {}
            AttackMode::Untargeted => {
                errors.push("--mode targeted: needs --target-class".to_string())
            }
        },
        (None, None) => {}
    }
    if a.no_mp {
        settings.manifold_projection = false;
    }
    if let Some(v) = a.mp_every {
        settings.mp_every = v;
    }
    if let Some(v) = a.epsilon {
        settings.epsilon = Some(v);
    }
    if let Some(v) = a.max_iters {
        settings.max_iterations = v;
    }
    if let Some(c) = &a.classifier {
        cfg.attack.classifier = c.clone();
    }
    errors.extend(cfg.validate());
    if errors.is_empty() {
        Ok(cfg.resolve())
    } else {
        Err(errors)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MGMW_LOG", "warn")).init();
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("error: invalid configuration");
            for e in errors {
                eprintln!("  {e}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Attack => commands::attack(&cfg),
        Command::MmatTrain => commands::mmat_train(&cfg),
        Command::GsTrain => commands::gs_train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Report => commands::report(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
