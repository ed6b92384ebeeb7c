use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Train and evaluate dexterous cube reposing policies.
#[derive(Debug, Parser)]
#[command(name = "reposer", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Built-in profile: paper, full or smoke.
    #[arg(long, default_value = "paper")]
    pub profile: String,
    /// TOML file overlaid on the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one value, e.g. `--set ppo.epochs=4`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub sets: Vec<String>,
    /// Run seed (same as `--set run.seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (same as `--set run.output_dir=DIR`). Relative paths
    /// resolve against $REPOSER_OUTPUT_ROOT, or the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Policy checkpoint; defaults to `<output>/policy.rpck`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of evaluation episodes (default: harness.eval_trials).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed of the evaluation goals and resets (default: harness.eval_seed).
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy, or validate the config / measure throughput.
    Train {
        #[command(flatten)]
        common: Common,
        /// Validate and print the resolved config, then exit.
        #[arg(long)]
        dry_run: bool,
        /// Measure environment throughput instead of training.
        #[arg(long)]
        benchmark: bool,
        /// Environments for `--benchmark`.
        #[arg(long, default_value_t = 4096)]
        bench_envs: usize,
        /// Steps per measurement for `--benchmark`.
        #[arg(long, default_value_t = 20)]
        bench_steps: usize,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many iterations (the run stays resumable).
        #[arg(long)]
        max_iterations: Option<u64>,
    },
    /// Evaluate a checkpoint on the configured task.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// Report name inside the output directory.
        #[arg(long, default_value = "eval")]
        name: String,
    },
    /// Success rate against a fixed object scale or mass multiplier.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// `scale` or `mass`.
        #[arg(long)]
        parameter: String,
        /// Comma-separated multipliers (default: the configured grid).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        grid: Option<Vec<f64>>,
    },
    /// Success rate under a grid of success thresholds.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Zero-shot transfer to other primitive objects.
    Objects {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// Objects such as `sphere:3.75` or `cuboid:2x8x2` (default: configured list).
        #[arg(long, value_delimiter = ',')]
        objects: Option<Vec<String>>,
    },
    /// Observation/reward encoding ablation over seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Environment steps per arm (default: harness.ablation_steps).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Render a report (heatmap, sweep, ablation or metrics.jsonl) as SVG.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Output file; defaults to `<output>/plots/<input stem>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Sweep { common, .. }
            | Command::Heatmap { common, .. }
            | Command::Objects { common, .. }
            | Command::Ablate { common, .. }
            | Command::Plot { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Heatmap { .. } => "heatmap",
            Command::Objects { .. } => "objects",
            Command::Ablate { .. } => "ablate",
            Command::Plot { .. } => "plot",
        }
    }
}
