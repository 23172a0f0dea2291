use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leap::commands::{self, VerifyArgs};
use leap::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "leap", version, about = "Attentive graph prompting with RL-driven node editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lr_head=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (beats LEAP_OUT_DIR and the `out_dir` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Randomized checks of the prompt-equivalence results on linear GNNs.
    Verify {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        /// Replace every per-case tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic dataset and its manifest.
    Gen(ConfigArgs),
    /// Masked-edge pretraining of the GIN backbone.
    Pretrain(ConfigArgs),
    /// Train one variant with one seed.
    Train(ConfigArgs),
    /// Evaluate a checkpoint and print the report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Dataset manifest to use instead of the one stored in the checkpoint.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Every configured variant under every configured seed.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Worker threads. Outputs do not depend on this.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// One variant under every configured seed, with mean and std.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Verify {
            cases,
            max_nodes,
            layers,
            tolerance,
            seed,
            out,
        } => {
            let out = RunConfig::default().output_dir(out.as_deref(), "runs/verify");
            commands::verify(&VerifyArgs {
                cases,
                max_nodes,
                layers,
                tolerance,
                seed,
                out,
            })
        }
        Command::Gen(a) => {
            let cfg = a.load()?;
            let manifest = commands::gen(&cfg, &cfg.output_dir(a.out.as_deref(), "data/synthetic"))?;
            eprintln!("wrote {}", manifest.display());
            Ok(0)
        }
        Command::Pretrain(a) => {
            let cfg = a.load()?;
            commands::pretrain(&cfg, &cfg.output_dir(a.out.as_deref(), "runs/pretrain"))
        }
        Command::Train(a) => {
            let cfg = a.load()?;
            commands::train(&cfg, &cfg.output_dir(a.out.as_deref(), "runs/train"))
        }
        Command::Eval {
            checkpoint,
            split,
            dataset,
        } => {
            let record = commands::eval(&checkpoint, &split, dataset.as_deref())?;
            println!("{}", serde_json::to_string(&record).expect("record serializes"));
            Ok(0)
        }
        Command::Ablate { cfg: a, jobs } => {
            let cfg = a.load()?;
            commands::ablate(&cfg, &cfg.output_dir(a.out.as_deref(), "runs/ablate"), jobs)
        }
        Command::Sweep { cfg: a, jobs } => {
            let cfg = a.load()?;
            commands::sweep(&cfg, &cfg.output_dir(a.out.as_deref(), "runs/sweep"), jobs)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
