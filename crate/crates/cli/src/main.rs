use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use otasplit::experiment::{
    prepare_model, run_accuracy_sweep, run_scalability_sweep, split_for_agents, write_accuracy_csv,
    write_scalability_csv, ExperimentConfig,
};
use otasplit::nn::{accuracy, load_weights, save_weights};
use otasplit::split::format::save_split;

#[derive(Parser)]
#[command(
    name = "otasplit",
    version,
    about = "Split-learning inference over analog and digital uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the desk-scale base model and save its weights.
    Train {
        #[command(flatten)]
        common: Common,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the split model for the first agent count in the config.
        #[arg(long)]
        split_out: Option<PathBuf>,
    },
    /// Test accuracy per scheme, agent count and SNR.
    Accuracy {
        #[command(flatten)]
        common: Common,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
        /// Use these weights instead of training.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Fail instead of training when no weights are given.
        #[arg(long)]
        no_train: bool,
    },
    /// Completed inference tasks under channel-use budgets.
    Scalability {
        #[command(flatten)]
        common: Common,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set agents=6,24`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("cannot read config {}", self.config.display()))?;
        let mut cfg = ExperimentConfig::parse(&text)
            .with_context(|| format!("invalid config {}", self.config.display()))?;
        for item in &self.overrides {
            let Some((key, value)) = item.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {item:?}");
            };
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn manifest(command: &str, cfg: &ExperimentConfig, out: &Path) {
    println!("command: {command}");
    println!("seed: {}", cfg.seed);
    println!("config_sha256: {}", cfg.hash());
    println!("output: {}", out.display());
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            common,
            out,
            split_out,
        } => {
            let cfg = common.load()?;
            manifest("train", &cfg, &out);
            let model = prepare_model(&cfg, None)?;
            save_weights(&model.base, &out)?;
            let pooled = model.test.pooled()?;
            println!(
                "test_accuracy_single_view: {}",
                accuracy(&model.base, &pooled)?
            );
            if let Some(path) = split_out {
                save_split(&split_for_agents(&model.base, cfg.agents[0])?, &path)?;
                println!("split ({} agents): {}", cfg.agents[0], path.display());
            }
        }
        Command::Accuracy {
            common,
            out,
            weights,
            no_train,
        } => {
            let cfg = common.load()?;
            let base = match weights {
                Some(path) => Some(
                    load_weights(&path)
                        .with_context(|| format!("cannot load weights {}", path.display()))?,
                ),
                None if no_train => bail!("no weights given and training is disabled"),
                None => None,
            };
            manifest("accuracy", &cfg, &out);
            let model = prepare_model(&cfg, base)?;
            let rows = run_accuracy_sweep(&cfg, &model)?;
            write_accuracy_csv(&rows, create(&out)?)?;
            println!("rows: {}", rows.len());
        }
        Command::Scalability { common, out } => {
            let cfg = common.load()?;
            manifest("scalability", &cfg, &out);
            let rows = run_scalability_sweep(&cfg)?;
            write_scalability_csv(&rows, create(&out)?)?;
            println!("rows: {}", rows.len());
        }
        Command::Selftest => {
            let mut failed = 0;
            for check in otasplit::selftest::run() {
                let verdict = if check.passed { "PASS" } else { "FAIL" };
                println!("[{verdict}] {}: {}", check.name, check.detail);
                failed += usize::from(!check.passed);
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
