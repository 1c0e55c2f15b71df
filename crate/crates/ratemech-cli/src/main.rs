//! `ratemech` — scenario-driven experiment runner for constrained-network
//! rate allocation mechanisms.
//!
//! Verbs:
//! - `validate`    check a scenario file and report structural problems
//! - `solve`       solve the welfare problem, print the optimality certificate
//! - `equilibrium` construct the equilibrium from the certificate and audit it
//! - `run`         full pipeline including perturbed-start dynamics
//! - `sweep`       cross a scenario with `--vary` grids, emit reports + CSV
//!
//! Exit codes: 0 when every asserted property holds, 2 when the instance is
//! out of scope (the welfare optimum leaves a link with fewer than two
//! active agents), 1 for failures of any kind.

mod pipeline;
mod report;
mod scenario;
mod sweep;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pipeline::{run_scenario, PipelineConfig};
use ratemech::game::Mechanism;
use ratemech::solver::solve_cp;
use scenario::{load_scenario, Overrides};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ratemech",
    version,
    about = "Welfare-optimal rate allocation via taxation mechanisms: solve, construct equilibria, audit, and sweep"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file: schema, referential integrity, network shape.
    Validate(ScenarioArg),
    /// Solve the centralized welfare problem and print its certificate.
    Solve(SolveArgs),
    /// Construct the equilibrium from the welfare certificate and audit it
    /// (no dynamics).
    Equilibrium(RunArgs),
    /// Full pipeline: solve, certify weights, construct, audit, and iterate
    /// best responses from perturbed starts.
    Run(RunArgs),
    /// Run a grid of configurations and write per-row reports plus a CSV
    /// summary.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed (affects random networks).
    #[arg(long)]
    seed: Option<u64>,
    /// Residual tolerance the certificate must meet.
    #[arg(long)]
    tol: Option<f64>,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's mechanism (wbb or sbb).
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<Mechanism>,
    /// Override the price-penalty weight.
    #[arg(long)]
    eta: Option<f64>,
    /// Override the scale-report penalty weight (sbb only).
    #[arg(long)]
    zeta: Option<f64>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Allocation-gap tolerance against the welfare optimum.
    #[arg(long)]
    tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario template (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Grid axis, repeatable: eta=0.1,0.01 | zeta=... | seed=1..20 |
    /// mechanism=wbb,sbb. Axes cross; the last one varies fastest.
    #[arg(long = "vary", value_name = "KEY=V1,V2,...")]
    vary: Vec<String>,
    /// Base overrides applied before the grid.
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<Mechanism>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allocation-gap tolerance against the welfare optimum.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for reports and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    match s {
        "wbb" => Ok(Mechanism::Wbb),
        "sbb" => Ok(Mechanism::Sbb),
        other => Err(format!("unknown mechanism `{other}` (expected wbb or sbb)")),
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_args_overrides(args: &RunArgs) -> Overrides {
    Overrides {
        mechanism: args.mechanism,
        eta: args.eta,
        zeta: args.zeta,
        seed: args.seed,
    }
}

fn pipeline_config(tol: Option<f64>, skip_dynamics: bool) -> PipelineConfig {
    let defaults = PipelineConfig::default();
    PipelineConfig {
        x_gap_tol: tol.unwrap_or(defaults.x_gap_tol),
        skip_dynamics,
    }
}

fn cmd_validate(args: &ScenarioArg) -> Result<i32> {
    let sc = load_scenario(&args.scenario, &Overrides::default())?;
    println!(
        "scenario `{}` is valid: {} agents, {} links, mechanism {}, seed {}",
        sc.name,
        sc.spec.n_agents(),
        sc.spec.n_links(),
        sc.params.mechanism(),
        sc.seed
    );
    Ok(0)
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let overrides = Overrides {
        seed: args.seed,
        ..Overrides::default()
    };
    let mut sc = load_scenario(&args.scenario, &overrides)?;
    if let Some(tol) = args.tol {
        sc.solver.tolerance = tol;
    }
    let cert = solve_cp(&sc.spec, &sc.vals, &sc.solver)?;
    let mut text = serde_json::to_string_pretty(&cert)?;
    text.push('\n');
    emit(&text, args.out.as_ref())?;
    Ok(if cert.optimal { 0 } else { 1 })
}

fn cmd_run(args: &RunArgs, skip_dynamics: bool) -> Result<i32> {
    let sc = load_scenario(&args.scenario, &run_args_overrides(args))?;
    let report = run_scenario(&sc, &pipeline_config(args.tol, skip_dynamics));
    emit(&report.to_json(), args.out.as_ref())?;
    if args.out.is_some() {
        println!("status: {}", report.status.label());
    }
    Ok(report.status.exit_code())
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let axes: Vec<sweep::Axis> = args
        .vary
        .iter()
        .map(|v| sweep::parse_axis(v))
        .collect::<Result<_>>()?;
    let base = Overrides {
        mechanism: args.mechanism,
        eta: args.eta,
        zeta: args.zeta,
        seed: args.seed,
    };
    // Load once by hand so the template parse errors point at the file.
    let bytes = std::fs::read(&args.scenario)
        .with_context(|| format!("cannot read scenario file {}", args.scenario.display()))?;
    let hash = {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    };
    let file: scenario::ScenarioFile = serde_json::from_slice(&bytes)
        .with_context(|| format!("cannot parse scenario file {}", args.scenario.display()))?;
    let fallback = args
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    let outcome = sweep::run_sweep(
        &file,
        base,
        &axes,
        &fallback,
        &hash,
        &pipeline_config(args.tol, false),
        &args.out,
    )?;
    let (mut pass, mut fail, mut oos) = (0usize, 0usize, 0usize);
    for r in &outcome.reports {
        match r.status {
            report::Status::Pass => pass += 1,
            report::Status::Fail => fail += 1,
            report::Status::OutOfScope => oos += 1,
        }
    }
    println!(
        "sweep: {} rows ({pass} pass, {fail} fail, {oos} out-of-scope); summary at {}",
        outcome.reports.len(),
        args.out.join("summary.csv").display()
    );
    Ok(outcome.exit_code)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print and succeed; anything else is a failure
            // per the exit-code contract.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Validate(args) => cmd_validate(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Equilibrium(args) => cmd_run(args, true),
        Cmd::Run(args) => cmd_run(args, false),
        Cmd::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
