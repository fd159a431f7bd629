use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liquid_dynamics::encoding::EncodingMode;
use liquid_dynamics::experiment::{self, ExperimentConfig, FeedforwardSource};
use liquid_dynamics::{Error, Result};

/// Learn robot inverse dynamics with a spiking liquid state machine.
#[derive(Debug, Parser)]
#[command(name = "lsmdyn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Gen,
    /// Train the pipeline and report train/test metrics.
    Train {
        #[arg(long)]
        encoder: Option<EncodingMode>,
    },
    /// Score a saved model against the mean and ridge baselines.
    Eval {
        /// Model artifact; defaults to model_<encoder>.json in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset CSV to score instead of the configured one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Search the liquid structure with a particle swarm.
    Search,
    /// Track a reach on the two-link plant.
    Track {
        /// Model artifact; defaults to model_<encoder>.json in the output directory.
        #[arg(long, conflicts_with_all = ["no_model", "oracle"])]
        model: Option<PathBuf>,
        /// Feedback only.
        #[arg(long)]
        no_model: bool,
        /// Exact inverse-dynamics feedforward.
        #[arg(long, conflicts_with = "no_model")]
        oracle: bool,
    },
    /// Dump the spike schedules of the first samples.
    EncodeInspect {
        #[arg(long)]
        encoder: Option<EncodingMode>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_model(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("model_{}.json", cfg.encoder.mode))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Gen => {
            for path in experiment::cmd_gen(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train { encoder } => {
            let r = experiment::cmd_train(&cfg, encoder)?;
            for (split, m) in [("train", &r.train), ("test", &r.test)] {
                println!(
                    "{} {split}: mean mse {} mean nmse {}",
                    r.mode,
                    m.mean_mse,
                    m.mean_nmse.map_or_else(|| "undefined".into(), |v| v.to_string())
                );
            }
            for path in &r.files {
                println!("wrote {}", path.display());
            }
        }
        Command::Eval { model, dataset } => {
            let model = model.unwrap_or_else(|| default_model(&cfg));
            let r = experiment::cmd_eval(&cfg, &model, dataset.as_deref())?;
            for (split, predictor, m) in &r.rows {
                let nmse: Vec<String> = m
                    .nmse
                    .iter()
                    .map(|v| v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}")))
                    .collect();
                println!("{split} {predictor}: nmse per joint [{}]", nmse.join(", "));
            }
            println!("wrote {}", r.path.display());
        }
        Command::Search => {
            let r = experiment::cmd_search(&cfg)?;
            for (count, result) in &r.runs {
                println!("{count} particles: best fitness {}", result.best_fitness);
            }
            for path in &r.files {
                println!("wrote {}", path.display());
            }
        }
        Command::Track {
            model,
            no_model,
            oracle,
        } => {
            let model = model.unwrap_or_else(|| default_model(&cfg));
            let source = if no_model {
                FeedforwardSource::None
            } else if oracle {
                FeedforwardSource::Oracle
            } else {
                FeedforwardSource::Model(&model)
            };
            let r = experiment::cmd_track(&cfg, source)?;
            println!("rms position error {}", r.rms_position_error);
            println!("wrote {}", r.path.display());
        }
        Command::EncodeInspect { encoder } => {
            let path = experiment::cmd_encode_inspect(&cfg, encoder)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
