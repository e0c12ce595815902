use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use staircase::commands;
use staircase::experiments;
use staircase::{CliError, Config};

/// Hierarchical two-head language classifier: data generation, training,
/// evaluation and experiment tables.
#[derive(Parser)]
#[command(name = "staircase", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides as `--key=value`; they win over the config file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/val/eval datasets.
    Gen(Common),
    /// Train a model and write a checkpoint and history.tsv.
    Train(Common),
    /// Evaluate a checkpoint on val and eval data (report.tsv, confusion.tsv).
    Eval(Common),
    /// Train one model per eta and tabulate C_primary.
    SweepEta(Common),
    /// Export a PCA -> LDA projection of raw or hidden features.
    Project(Common),
    /// Print class priors and loss weights of the training data.
    Weights(Common),
    /// Paired comparison of model variants over several seeds.
    Suite(Common),
    /// Leave-one-speaker-out protocol.
    Loso(Common),
    /// Cosine, logistic regression, single-task and HAUs backends.
    Backends(Common),
    /// Print the effective configuration.
    Config(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Gen(c)
        | Command::Train(c)
        | Command::Eval(c)
        | Command::SweepEta(c)
        | Command::Project(c)
        | Command::Weights(c)
        | Command::Suite(c)
        | Command::Loso(c)
        | Command::Backends(c)
        | Command::Config(c) => c,
    };
    let cfg = Config::load(common.config.as_deref(), &common.overrides)?;
    let written = match cli.command {
        Command::Gen(_) => commands::cmd_gen(&cfg)?,
        Command::Train(_) => commands::cmd_train(&cfg)?,
        Command::Eval(_) => commands::cmd_eval(&cfg)?,
        Command::SweepEta(_) => commands::cmd_sweep_eta(&cfg)?,
        Command::Project(_) => commands::cmd_project(&cfg)?,
        Command::Weights(_) => commands::cmd_weights(&cfg)?,
        Command::Suite(_) => {
            experiments::run_suite(&cfg)?;
            experiments::suite_outputs(&cfg)
        }
        Command::Loso(_) => {
            experiments::run_loso(&cfg)?;
            vec![cfg.out_dir.join("loso.tsv")]
        }
        Command::Backends(_) => {
            experiments::run_backends(&cfg)?;
            vec![cfg.out_dir.join("backends.tsv")]
        }
        Command::Config(_) => {
            commands::print_stdout(&cfg.render());
            Vec::new()
        }
    };
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STAIRCASE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("error\tusage\t{}", e.to_string().lines().next().unwrap_or_default());
                return ExitCode::from(2);
            }
            // --help, --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\t'], " ");
            eprintln!("error\t{}\t{msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
