//! `distress`: batch driver for synthesis, the cross-validated horse race,
//! proxy-score reports, zombie analysis and Shapley attribution.

mod config;
mod pipeline;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};
use pipeline::Run;

#[derive(Parser)]
#[command(name = "distress", version, about = "Missing-aware failure prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Firm-year panel CSV (firm_id, year, failed, features...). Without it
    /// a synthetic panel is generated from the config.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// TOML run configuration; flags given here take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for synthesis, folds and model randomness [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-validation folds [default: 5].
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory [default: the config's `out`, else distress_out].
    #[arg(long, global = true, env = "DISTRESS_OUT")]
    out: Option<PathBuf>,
    /// Write wall-clock fit times into the horse-race table (otherwise "NA").
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic panel and its hidden ground truth.
    Synth,
    /// Cross-validated horse race of the configured models.
    Cv,
    /// Percentile precision/FDR of proxy scores and model risk.
    Scores,
    /// Decile thresholds, zombie flags, transitions and the BACC scan.
    Zombie,
    /// Shapley attribution of the explained model's AUC.
    Shap,
    /// Every stage in one run.
    All,
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(k) = common.folds {
        cfg.folds = k;
    }
    if common.input.is_some() {
        cfg.input = common.input.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", toml::to_string(&RunConfig::default())?);
        return Ok(());
    }
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            anyhow::bail!(ConfigError("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let cfg = resolve(&cli.common)?;
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("distress_out"));
    let mut run = Run::new(cfg, out, cli.common.timing)?;
    match cli.command {
        Command::Synth => run.synth()?,
        Command::Cv => run.cv()?,
        Command::Scores => run.scores()?,
        Command::Zombie => run.zombie()?,
        Command::Shap => run.shap()?,
        Command::All => {
            if run.cfg.input.is_none() {
                run.synth()?;
            }
            run.cv()?;
            run.scores()?;
            run.zombie()?;
            run.shap()?;
        }
        Command::DefaultConfig => unreachable!(),
    }
    run.write_manifest()?;
    Ok(())
}

/// Stable error category for the JSON report.
fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(core) = e.downcast_ref::<distress_core::Error>() {
        return core.kind();
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        return "ConfigError";
    }
    if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        return "IoError";
    }
    if e.downcast_ref::<toml::ser::Error>().is_some() || e.downcast_ref::<rayon::ThreadPoolBuildError>().is_some() {
        return "ConfigError";
    }
    "Error"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": error_kind(&e),
                "message": format!("{e:#}"),
            });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}
