use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperml::runner::{self, Progress};
use hyperml::{Error, Result, Split, SweepSpec, TrainConfig};

/// Hyperbolic metric learning recommender.
#[derive(Debug, Parser)]
#[command(name = "hyperml", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoints, logs and a run summary.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Recompute ranking metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Candidate cache written by `train`; rebuilt from the seed when omitted.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a checkpoint in the 9-significant-digit export format.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train over a grid of one or two hyperparameters.
    Sweep {
        /// Axis as `name=v1,v2,...` with name one of c, gamma, margin (m), lr. Repeat for a second axis.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
        /// Runs per grid point, with seeds seed..seed+repeats-1.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Configuration overrides. Each flag has the same name as its config-file key.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long, alias = "m")]
    margin: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, alias = "learning-rate")]
    lr: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    n_negatives: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    min_interactions: Option<String>,
    #[arg(long)]
    k_core: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    rescale: Option<String>,
    #[arg(long)]
    grad_clip: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    distortion_epsilon: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    header: Option<String>,
    #[arg(long)]
    timestamp_column: Option<String>,
    #[arg(long)]
    parallel: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("variant", &self.variant),
            ("c", &self.c),
            ("dim", &self.dim),
            ("margin", &self.margin),
            ("gamma", &self.gamma),
            ("lr", &self.lr),
            ("beta", &self.beta),
            ("batch-size", &self.batch_size),
            ("epochs", &self.epochs),
            ("eval-every", &self.eval_every),
            ("k", &self.k),
            ("n-negatives", &self.n_negatives),
            ("seed", &self.seed),
            ("min-interactions", &self.min_interactions),
            ("k-core", &self.k_core),
            ("input", &self.input),
            ("output-dir", &self.output_dir),
            ("optimizer", &self.optimizer),
            ("rescale", &self.rescale),
            ("grad-clip", &self.grad_clip),
            ("dropout", &self.dropout),
            ("distortion-epsilon", &self.distortion_epsilon),
            ("delimiter", &self.delimiter),
            ("header", &self.header),
            ("timestamp-column", &self.timestamp_column),
            ("parallel", &self.parallel),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, quiet } => {
            let cfg = config.resolve()?;
            let mut progress = |p: Progress| {
                if quiet {
                    return;
                }
                match p {
                    Progress::Epoch(l) => eprintln!(
                        "epoch {:>5}  loss {:.6}  pull-push {:.6}  distortion {:.6}",
                        l.epoch, l.total, l.pull_push, l.distortion
                    ),
                    Progress::Eval(r) => {
                        eprintln!("{}", hyperml::eval::format_metrics_line(r.epoch, &r.validation));
                        eprintln!("{}", hyperml::eval::format_metrics_line(r.epoch, &r.test));
                    }
                }
            };
            let outcome = runner::run_train(&cfg, &mut progress)?;
            let s = &outcome.summary;
            println!(
                "best epoch {}: {} | {}",
                s.best_epoch, s.best_validation, s.test_at_best
            );
        }
        Command::Eval {
            checkpoint,
            split,
            candidates,
            config,
        } => {
            let cfg = config.resolve()?;
            let split: Split = split.parse()?;
            let out = runner::run_eval(&checkpoint, &cfg, split, candidates.as_deref())?;
            println!("{}", out.log_line());
        }
        Command::Export { checkpoint, out } => runner::run_export(&checkpoint, &out)?,
        Command::Sweep {
            grid,
            repeats,
            config,
        } => {
            let cfg = config.resolve()?;
            let spec = SweepSpec::parse(&grid, repeats)?;
            if cfg.output_dir.is_none() {
                return Err(Error::config("output-dir", "a sweep needs an output directory"));
            }
            cfg.validate()?;
            let rows = runner::run_sweep(&cfg, &spec)?;
            print!("{}", runner::format_sweep_table(&spec, &rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
