//! `femu`: command-line driver for damage-identification scenarios.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use femu_core::harness::{
    check_derivatives, choose_lambda, run_scenario, MeasuredFile, ScenarioConfig,
};
use femu_core::optimizer::{CornerStatus, LCurve};
use serde_json::json;

#[derive(Parser)]
#[command(name = "femu", version, about = "Finite element model updating for damage identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize measured modal data for a scenario.
    Simulate(CommonArgs),
    /// Run a scenario end to end and write the report and plot data.
    Update(CommonArgs),
    /// Sweep the regularization parameter and locate the L-curve corner.
    Lcurve(CommonArgs),
    /// Compare every analytic derivative with finite differences.
    Check(CommonArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

impl CommonArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn simulate(args: &CommonArgs) -> Result<bool> {
    let cfg = args.load()?;
    let prepared = cfg.prepare()?;
    let file = MeasuredFile::from_synthesized(&prepared.synthesized, prepared.model.sensors());
    let path = match args.format {
        Format::Json => args.write("measured.json", &pretty(&file)?)?,
        Format::Csv => args.write("measured.csv", &file.to_csv())?,
    };
    println!("{}", path.display());
    Ok(true)
}

fn update(args: &CommonArgs) -> Result<bool> {
    let cfg = args.load()?;
    let report = run_scenario(&cfg);
    let json_path = args.write("report.json", &pretty(&report)?)?;
    let csv_path = args.write("di.csv", &report.plot_csv())?;
    if let Some(lc) = report.lcurve_csv() {
        args.write("lcurve.csv", &lc)?;
    }
    match args.format {
        Format::Json => println!("{}", json_path.display()),
        Format::Csv => print!("{}", report.plot_csv()),
    }
    eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
    if !report.succeeded() {
        eprintln!("run failed: {}", serde_json::to_string(&report.status)?);
    }
    Ok(report.succeeded())
}

fn lcurve_csv(curve: &LCurve) -> String {
    let mut out = String::from("lambda,data_fit,penalty,converged\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{},{}\n", p.lambda, p.data_fit, p.penalty, p.converged));
    }
    out
}

fn lcurve(args: &CommonArgs) -> Result<bool> {
    let cfg = args.load()?;
    let prepared = cfg.prepare()?;
    let problem = cfg.problem(&prepared, 0.0)?;
    let (lambda, source, curve, status) = choose_lambda(&cfg, &problem)?;
    let path = match args.format {
        Format::Json => args.write(
            "lcurve.json",
            &pretty(&json!({
                "config": cfg,
                "lambda": lambda,
                "lambda_source": source,
                "corner": status,
                "curve": curve,
            }))?,
        )?,
        Format::Csv => args.write("lcurve.csv", &lcurve_csv(&curve))?,
    };
    match status {
        CornerStatus::Found(c) => println!("corner lambda={:e} curvature={:.4}", c.lambda, c.curvature),
        CornerStatus::NoCorner { max_curvature } => {
            println!("no corner (max curvature {max_curvature:.4}); fallback lambda={lambda:e}")
        }
    }
    eprintln!("wrote {}", path.display());
    Ok(true)
}

fn check(args: &CommonArgs) -> Result<bool> {
    let cfg = args.load()?;
    let report = check_derivatives(&cfg)?;
    match args.format {
        Format::Json => {
            args.write("check.json", &pretty(&report)?)?;
        }
        Format::Csv => {
            let mut out = String::from("name,max_rel_error,threshold,passed,skipped\n");
            for c in &report.checks {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.name, c.max_rel_error, c.threshold, c.passed, c.skipped
                ));
            }
            args.write("check.csv", &out)?;
        }
    }
    for c in &report.checks {
        println!(
            "{:<5} {:<36} {:.3e} (threshold {:.0e}){}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.threshold,
            if c.skipped > 0 { format!(", {} skipped", c.skipped) } else { String::new() }
        );
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Update(a) => update(a),
        Command::Lcurve(a) => lcurve(a),
        Command::Check(a) => check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
