use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paraling_cli::commands::{self, IvectorTraining, Status};
use paraling_cli::config::ExperimentConfig;
use paraling_cli::manifest::Manifest;
use paraling_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "paraling", version, about = "Paralinguistic feature extraction and SVM evaluation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Experiment {
    /// Corpus manifest (CSV: path,label,speaker,gender[,duration_s]).
    #[arg(long)]
    manifest: PathBuf,
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature scheme such as `art+pro+pho`; overrides the config.
    #[arg(long)]
    scheme: Option<String>,
}

impl Experiment {
    fn load(&self) -> Result<(Manifest, ExperimentConfig)> {
        let manifest = Manifest::load(&self.manifest)?;
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let scheme = self
                    .scheme
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("give --config or --scheme".into()))?;
                ExperimentConfig::for_scheme(scheme.parse()?)
            }
        };
        if let Some(s) = &self.scheme {
            config.scheme = s.parse()?;
        }
        Ok((manifest, config))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every manifest row into a CSV table.
    Extract {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nested cross-validation; writes report.toml, metrics.csv, roc.csv and predictions.csv.
    Evaluate {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit one classifier on the whole manifest at fixed hyperparameters.
    Train {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        model: PathBuf,
    },
    /// Label a manifest with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class counts and durations, duration t-test and gender chi-square.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the UBM and total-variability matrix for the ivector scheme.
    TrainIvector {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        components: usize,
        #[arg(long, default_value_t = 100)]
        rank: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write randomly initialised x-vector weights.
    InitXvector {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        speakers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p.display().to_string(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Extract { exp, out } => {
            let (manifest, config) = exp.load()?;
            Ok(commands::cmd_extract(&manifest, &config, &out)?.status)
        }
        Command::Evaluate { exp, out_dir } => {
            let (manifest, config) = exp.load()?;
            Ok(commands::cmd_evaluate(&manifest, &config, &out_dir)?.status)
        }
        Command::Train { exp, c, gamma, model } => {
            let (manifest, config) = exp.load()?;
            commands::cmd_train(&manifest, &config, c, gamma, &model)
        }
        Command::Predict { model, manifest, config, out } => {
            let manifest = Manifest::load(&manifest)?;
            let config = config.map(ExperimentConfig::load).transpose()?;
            Ok(commands::cmd_predict(&model, &manifest, config.as_ref(), &out)?.status)
        }
        Command::Stats { manifest, out } => {
            let stats = commands::cmd_stats(&Manifest::load(&manifest)?)?;
            write_or_print(out.as_deref(), &stats.to_text())?;
            Ok(Status::Complete)
        }
        Command::TrainIvector { manifest, out, components, rank, iterations, seed } => {
            let opts = IvectorTraining { components, rank, iterations, seed };
            commands::cmd_train_ivector(&Manifest::load(&manifest)?, &opts, &out)
        }
        Command::InitXvector { out, speakers, seed } => {
            commands::cmd_init_xvector(speakers, seed, &out)?;
            Ok(Status::Complete)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
