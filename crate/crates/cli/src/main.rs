use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use eladapt::harness::{catalog, catalog_entry, checks, load_config, run_scenario, ScenarioConfig, Summary};

#[derive(Parser)]
#[command(name = "eladapt", version, about = "Simulate parameter estimation and adaptive control of a two-link arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run catalog scenarios or config files (`all` runs the whole catalog).
    Run {
        #[arg(required = true)]
        targets: Vec<String>,
        #[command(flatten)]
        overrides: Flags,
        /// Directory for CSV files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Print summaries as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// List the built-in scenarios.
    List,
    /// Run the invariant suite.
    Check {
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args, Clone, Default)]
struct Flags {
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// gradient | drem | drem_newlre | known
    #[arg(long)]
    estimator: Option<String>,
    /// power_balance | classical
    #[arg(long)]
    parameterization: Option<String>,
    /// tau_a | tau_b | tau_c | closed_loop_regulation | closed_loop_tracking
    #[arg(long)]
    input: Option<String>,
}

impl Flags {
    fn apply(&self, cfg: &mut ScenarioConfig) -> eladapt::Result<()> {
        let ov = eladapt::harness::Overrides {
            dt: self.dt,
            horizon: self.horizon,
            estimator: self.estimator.clone(),
            parameterization: self.parameterization.clone(),
            input: self.input.clone(),
            ..Default::default()
        };
        cfg.apply(&ov)?;
        cfg.validate()
    }
}

fn resolve(target: &str, flags: &Flags) -> Result<Vec<ScenarioConfig>> {
    let mut cfgs = if target == "all" {
        catalog()
    } else if Path::new(target).is_file() {
        load_config(Path::new(target)).with_context(|| format!("loading {target}"))?
    } else {
        vec![catalog_entry(target)?]
    };
    for cfg in &mut cfgs {
        flags.apply(cfg).with_context(|| format!("scenario {}", cfg.name))?;
    }
    Ok(cfgs)
}

fn failure_summary(failures: &[(String, String)]) -> String {
    let list: Vec<_> = failures.iter().map(|(name, error)| json!({ "name": name, "error": error })).collect();
    json!({ "status": "failed", "failures": list }).to_string()
}

fn run(targets: &[String], flags: &Flags, out: &Path, as_json: bool) -> Result<ExitCode> {
    let mut cfgs = Vec::new();
    let mut failures = Vec::new();
    for t in targets {
        match resolve(t, flags) {
            Ok(c) => cfgs.extend(c),
            Err(e) => failures.push((t.clone(), format!("{e:#}"))),
        }
    }
    let results: Vec<(String, eladapt::Result<Summary>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| scope.spawn(move || (cfg.name.clone(), run_scenario(cfg, out).map(|r| r.summary))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    for (name, res) in results {
        match res {
            Ok(summary) if as_json => println!("{}", serde_json::to_string(&summary)?),
            Ok(summary) => println!("{summary}"),
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}", failure_summary(&failures));
        Ok(ExitCode::FAILURE)
    }
}

fn check(as_json: bool) -> Result<ExitCode> {
    let results = checks::run_all();
    let mut failures = Vec::new();
    for r in &results {
        if as_json {
            println!("{}", serde_json::to_string(r)?);
        } else {
            println!("{r}");
        }
        if !r.passed {
            failures.push((r.name.to_string(), r.detail.clone()));
        }
    }
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}", failure_summary(&failures));
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{e}");
            println!("{}", failure_summary(&[("arguments".into(), e.kind().to_string())]));
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Run { targets, overrides, out, json } => run(targets, overrides, out, *json),
        Command::List => {
            for c in catalog() {
                println!("{:<50} horizon {:>4} s  gamma {:>5}  gamma_i {:>5}", c.name, c.horizon, c.gamma, c.gamma_i);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { json } => check(*json),
    };
    outcome.unwrap_or_else(|e| {
        println!("{}", failure_summary(&[("eladapt".into(), format!("{e:#}"))]));
        ExitCode::FAILURE
    })
}
