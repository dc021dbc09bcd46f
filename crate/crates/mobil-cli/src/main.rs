//! `mobil`: runs experiments, sweeps, rate fits and verification suites.

mod output;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use mobil_core::{fit_rate, run_mobil, ExperimentConfig, MobilError};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "mobil", version, about = "Model-based online imitation learning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; trace files go to $MOBIL_OUT_DIR (default: current directory).
    Run { config: PathBuf },
    /// Run the cartesian product of the --vary lists over a config template.
    Sweep {
        template: PathBuf,
        /// key=v1,v2,... (repeatable)
        #[arg(long = "vary", value_name = "KEY=V1,V2,...")]
        vary: Vec<String>,
    },
    /// Log-log least-squares slope of a trace column against n.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 1.0)]
        nmin: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        nmax: f64,
    },
    /// Run a property suite and print a JSON report.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(verify::SUITES))]
        suite: String,
    },
}

/// Failure classes mapped onto exit codes 1 and 2.
enum Failure {
    Usage(anyhow::Error),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = ExperimentConfig::parse_text(&text).map_err(config_error)?;
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn config_error(e: MobilError) -> anyhow::Error {
    match e {
        MobilError::Config(list) => anyhow!("invalid config:\n  {}", list.join("\n  ")),
        other => anyhow!(other),
    }
}

fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let out = run_mobil(cfg).with_context(|| format!("run {} failed", output::config_hash(cfg)))?;
    output::write_run(dir, cfg, &out)
}

fn run(config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let path = execute(&cfg, &output::out_dir())?;
    println!("{}", path.display());
    Ok(())
}

fn expand(template: &ExperimentConfig, vary: &[String]) -> Result<Vec<ExperimentConfig>> {
    let mut configs = vec![template.clone()];
    let mut errors = Vec::new();
    for spec in vary {
        let Some((key, values)) = spec.split_once('=') else {
            bail!("--vary expects KEY=V1,V2,..., got `{spec}`");
        };
        let mut next = Vec::new();
        for base in &configs {
            for v in values.split(',').map(str::trim) {
                let mut c = base.clone();
                match c.set(key.trim(), v) {
                    Ok(()) => next.push(c),
                    Err(e) => errors.push(e),
                }
            }
        }
        configs = next;
    }
    for c in &configs {
        if let Err(MobilError::Config(list)) = c.validate() {
            errors.extend(list.into_iter().map(|e| format!("{}: {e}", output::config_hash(c))));
        }
    }
    errors.dedup();
    if !errors.is_empty() {
        bail!("invalid sweep:\n  {}", errors.join("\n  "));
    }
    Ok(configs)
}

fn sweep(template: &Path, vary: &[String]) -> Result<()> {
    let configs = expand(&read_config(template)?, vary)?;
    let dir = output::out_dir();
    let results: Vec<Result<PathBuf>> = configs.par_iter().map(|c| execute(c, &dir)).collect();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(p) => println!("{}", p.display()),
            Err(e) => failed.push(format!("{e:#}")),
        }
    }
    if !failed.is_empty() {
        bail!("{} of {} runs failed:\n  {}", failed.len(), configs.len(), failed.join("\n  "));
    }
    Ok(())
}

fn fit(csv_path: &Path, column: &str, nmin: f64, nmax: f64) -> Result<()> {
    let mut reader = csv::Reader::from_path(csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("no column `{name}`"));
    let (n_idx, v_idx) = (find("n")?, find(column)?);
    let (mut ns, mut vs) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().with_context(|| format!("row {}: cannot parse `{}`", line + 1, &rec[i]))
        };
        ns.push(parse(n_idx)?);
        vs.push(parse(v_idx)?);
    }
    let f = fit_rate(&ns, &vs, nmin, nmax)?;
    let report = serde_json::json!({
        "column": column,
        "slope": f.slope,
        "intercept": f.intercept,
        "r_squared": f.r_squared,
        "n_min": f.n_min,
        "n_max": f.n_max,
        "points": f.points,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn verify(suite: &str) -> Result<(), Failure> {
    let report = verify::run_suite(suite).ok_or_else(|| anyhow!("unknown suite `{suite}`"))?;
    println!("{}", serde_json::to_string_pretty(&report.to_json()).map_err(anyhow::Error::from)?);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { config } => run(config).map_err(Failure::from),
        Command::Sweep { template, vary } => sweep(template, vary).map_err(Failure::from),
        Command::Fit { csv, column, nmin, nmax } => fit(csv, column, *nmin, *nmax).map_err(Failure::from),
        Command::Verify { suite } => verify(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => ExitCode::from(2),
    }
}
