use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msamp::cli::{
    cmd_gen_config, cmd_oracle, cmd_run, cmd_se, cmd_validate, default_oracle_config,
    ExperimentSpec,
};
use msamp::dictionary::DictionaryKind;
use msamp::error::Result;

/// Multi-source AMP simulator with random semi-unitary dictionaries.
#[derive(Parser)]
#[command(name = "msamp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonFlags {
    /// Experiment/config file (flat TOML keys; see gen-config)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override trials per grid point
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = automatic)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Override the dictionary kind
    #[arg(long, value_parser = parse_kind)]
    dict: Option<DictionaryKind>,
}

fn parse_kind(s: &str) -> std::result::Result<DictionaryKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Subcommand)]
enum Command {
    /// Sweep experiment: state evolution plus AMP instances per grid point
    Run(CommonFlags),
    /// Two-time state-evolution covariance table
    Se(CommonFlags),
    /// Paired-dynamics moment comparison report
    Oracle(CommonFlags),
    /// Self-check battery (all criteria, or the listed subset)
    Validate {
        /// Criterion indices (1-11); empty runs everything
        criteria: Vec<usize>,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Write a documented default experiment config
    GenConfig(CommonFlags),
}

fn read_spec(flags: &CommonFlags) -> Result<ExperimentSpec> {
    let path = flags.config.as_ref().ok_or_else(|| {
        msamp::error::Error::Config("--config is required for this subcommand".into())
    })?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| msamp::error::Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut spec = ExperimentSpec::from_toml_str(&text)?;
    if let Some(seed) = flags.seed {
        spec.base.seed = seed;
    }
    if let Some(trials) = flags.trials {
        spec.trials = trials;
    }
    if let Some(kind) = flags.dict {
        spec.base.dict_kind = kind;
        spec.dict_kinds = vec![kind];
    }
    Ok(spec)
}

fn emit(flags: &CommonFlags, text: &str) -> Result<()> {
    match &flags.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| msamp::error::Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(flags) => {
            let spec = read_spec(&flags)?;
            let csv = cmd_run(&spec, flags.threads)?;
            emit(&flags, &csv)?;
            Ok(true)
        }
        Command::Se(flags) => {
            let spec = read_spec(&flags)?;
            let csv = cmd_se(&spec.base)?;
            emit(&flags, &csv)?;
            Ok(true)
        }
        Command::Oracle(flags) => {
            let mut cfg = match &flags.config {
                Some(_) => read_spec(&flags)?.base,
                None => default_oracle_config(flags.seed.unwrap_or(7)),
            };
            if let Some(seed) = flags.seed {
                cfg.seed = seed;
            }
            let csv = cmd_oracle(&cfg, flags.trials.unwrap_or(400), flags.threads)?;
            emit(&flags, &csv)?;
            Ok(true)
        }
        Command::Validate { criteria, flags } => {
            let (text, ok) = cmd_validate(&criteria)?;
            emit(&flags, &text)?;
            if flags.out.is_some() {
                print!("{text}");
            }
            Ok(ok)
        }
        Command::GenConfig(flags) => {
            emit(&flags, &cmd_gen_config())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
