use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxgst::datagen::Dataset;
use ctxgst::ls_model::ContextMode;
use ctxgst::runner::{self, ExperimentConfig};
use ctxgst::Error;

#[derive(Parser)]
#[command(name = "ctxgst", version, about = "Context-aware gate set tomography for light-shift gates")]
struct Cli {
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ContextMode>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean gate diamond distance against depth for each scheme.
    ScanDepth,
    /// Monte Carlo error of the LS noise parameters against depth, with Fisher bounds.
    ParamScaling,
    /// Fit context-dependent data with both models and compare.
    ContextCompare,
    /// Amplification factor and amplified thermal rate against depth.
    Amplification,
    /// Breathing-mode displacement after each gate.
    Trajectory,
    /// Discrete and continuous non-Markovianity measures.
    Nonmarkov,
    /// Fit a stored dataset.
    Fit {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Draw and store one dataset.
    Sample,
    /// Fisher-information bounds of the Ramsey design.
    Fisher,
}

fn parse_mode(s: &str) -> Result<ContextMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Parse { .. } | Error::Design(_) | Error::Dataset(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> ctxgst::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    let path = match cli.command {
        Command::ScanDepth => runner::write_csv(&cfg, "scan_depth", &runner::scan_rows_csv(&runner::cmd_scan_depth(&cfg)?))?,
        Command::ParamScaling => runner::write_csv(&cfg, "param_scaling", &runner::param_rows_csv(&runner::cmd_param_scaling(&cfg)?))?,
        Command::ContextCompare => runner::write_csv(&cfg, "context_compare", &runner::compare_rows_csv(&runner::cmd_context_compare(&cfg)?))?,
        Command::Amplification => runner::write_csv(&cfg, "amplification", &runner::cmd_amplification(&cfg)?)?,
        Command::Trajectory => runner::write_csv(&cfg, "trajectory", &runner::cmd_trajectory(&cfg)?)?,
        Command::Nonmarkov => runner::write_csv(&cfg, "nonmarkov", &runner::cmd_nonmarkov(&cfg)?.to_csv_rows())?,
        Command::Sample => {
            let ds = runner::cmd_sample(&cfg)?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("dataset.json");
            ds.store(&path)?;
            path
        }
        Command::Fit { dataset } => {
            let src = dataset.or_else(|| cfg.dataset.clone()).unwrap_or_else(|| cfg.out.join("dataset.json"));
            let ds = Dataset::load(&src)?;
            let result = runner::cmd_fit(&cfg, &ds)?;
            runner::write_json(&cfg, "fit", &result.to_json())?
        }
        Command::Fisher => runner::write_csv(&cfg, "fisher", &runner::cmd_fisher(&cfg)?)?,
    };
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
