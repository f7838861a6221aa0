//! Command-line entry point: seeded multi-run training, the loss-term
//! ablation matrix, the action-search sweep, the numerical verification
//! battery, and SVG plotting from episode CSVs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pac4sac::harness::{
    ablation_rows, plot_episodes, run_ablation, run_shooting_sweep, run_training, run_verify,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "pac4sac",
    about = "Actor-critic training with a PAC-Bayes-trained randomized critic, plus a SAC baseline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm across seeds; writes episode CSVs, checkpoints, and metrics.json.
    Train(RunArgs),
    /// Run the critic-loss ablation matrix (data fit / +complexity / +correction).
    Ablate(RunArgs),
    /// Train with several action-search sample counts and emit learning-curve CSVs.
    SweepR(SweepArgs),
    /// Run the numerical verification battery; exits nonzero on any failure.
    Verify {
        /// Directory for counterexample artifacts of failing properties.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render smoothed learning curves from episode CSVs into an SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with a full run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment name: pendulum | cartpole-swingup.
    #[arg(long)]
    env: Option<String>,
    /// Algorithm: pac4sac | sac.
    #[arg(long)]
    algo: Option<String>,
    /// Environment steps per seed.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Action-search sample count R.
    #[arg(long = "R")]
    search_samples: Option<usize>,
    /// Overestimation-correction coefficient ξ.
    #[arg(long)]
    xi: Option<f64>,
    /// Entropy coefficient α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Polyak rate τ.
    #[arg(long)]
    tau: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Replay capacity.
    #[arg(long)]
    buffer: Option<usize>,
    /// Discount γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Warmup steps with uniform actions and no updates.
    #[arg(long)]
    warmup: Option<usize>,
    /// Prior std σ₀ of the critic weight posterior.
    #[arg(long)]
    prior_std: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated action-search sample counts.
    #[arg(long = "r-list", value_delimiter = ',', required = true)]
    r_list: Vec<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Episode CSV files to plot.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Plot title.
    #[arg(long, default_value = "episode reward")]
    title: String,
}

fn build_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json_file(path)
            .with_context(|| format!("loading config from {}", path.display()))?,
        None => RunConfig {
            env: "pendulum".into(),
            algo: "pac4sac".into(),
            training: Default::default(),
            seeds: vec![0],
            out_dir: PathBuf::from("runs/latest"),
        },
    };
    if let Some(env) = &args.env {
        config.env = env.clone();
    }
    if let Some(algo) = &args.algo {
        config.algo = algo.clone();
    }
    if let Some(steps) = args.steps {
        config.training.total_steps = steps;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(r) = args.search_samples {
        config.training.search_samples = r;
    }
    if let Some(xi) = args.xi {
        config.training.correction_coef = xi;
    }
    if let Some(alpha) = args.alpha {
        config.training.entropy_coef = alpha;
    }
    if let Some(tau) = args.tau {
        config.training.polyak_rate = tau;
    }
    if let Some(lr) = args.lr {
        config.training.learning_rate = lr;
    }
    if let Some(batch) = args.batch {
        config.training.batch_size = batch;
    }
    if let Some(buffer) = args.buffer {
        config.training.buffer_capacity = buffer;
    }
    if let Some(gamma) = args.gamma {
        config.training.discount = gamma;
    }
    if let Some(warmup) = args.warmup {
        config.training.warmup_steps = warmup;
    }
    if let Some(prior_std) = args.prior_std {
        config.training.prior_std = prior_std;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn run() -> anyhow::Result<bool> {
    match Cli::parse().command {
        Command::Train(args) => {
            run_training(&build_config(&args)?)?;
            Ok(true)
        }
        Command::Ablate(args) => {
            let config = build_config(&args)?;
            let reports = run_ablation(&config, &ablation_rows())?;
            for report in &reports {
                println!(
                    "row auc {:.1} ± {:.1}, highest {:.1} ± {:.1}",
                    report.aggregate.auc_mean,
                    report.aggregate.auc_sd,
                    report.aggregate.highest_mean,
                    report.aggregate.highest_sd
                );
            }
            println!("ablation table: {}", config.out_dir.join("ablation.csv").display());
            Ok(true)
        }
        Command::SweepR(args) => {
            let config = build_config(&args.run)?;
            let results = run_shooting_sweep(&config, &args.r_list)?;
            for (r, report) in &results {
                println!(
                    "R={r}: auc {:.1} ± {:.1}, highest {:.1} ± {:.1}",
                    report.aggregate.auc_mean,
                    report.aggregate.auc_sd,
                    report.aggregate.highest_mean,
                    report.aggregate.highest_sd
                );
            }
            println!("curves: {}", config.out_dir.join("curves.csv").display());
            Ok(true)
        }
        Command::Verify { out } => Ok(run_verify(out.as_deref())?),
        Command::Plot(args) => {
            plot_episodes(&args.inputs, &args.out, &args.title)?;
            println!("wrote {}", args.out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
