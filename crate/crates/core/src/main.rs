use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bl_homotopy::discretization::HomotopyKind;
use bl_homotopy::experiment::{
    compare_csv, compare_homotopies, metrics_csv, run_metrics, run_solve, run_trace, solve_csv, trace_csv,
};
use bl_homotopy::scenario::{load_scenario_with, Scenario};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_TRACE: u8 = 4;

#[derive(Parser)]
#[command(name = "bl-hc", version, about = "Homotopy continuation experiments for implicit Buckley-Leverett steps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March all time steps and write per-step profiles.
    Solve(Common),
    /// Trace the homotopy curve of one time step.
    Trace(Common),
    /// Curvature and predictor radius along an arclength-sampled curve.
    Metrics(Common),
    /// Summary table over homotopy kinds (all kinds unless --homotopy is given).
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// target_only, vanishing_diffusion, linear_relperm or hull; repeatable for compare.
    #[arg(long, value_parser = parse_kind)]
    homotopy: Vec<HomotopyKind>,
    /// Scenario override `key.path=value`, applied before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_kind(s: &str) -> Result<HomotopyKind, String> {
    HomotopyKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = HomotopyKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("unknown homotopy `{s}` (expected one of {})", names.join(", "))
    })
}

enum Failure {
    Config(String),
    Solver(String),
    Trace(String),
}

fn write(dir: &Path, file: String, body: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(file);
    std::fs::write(&path, body).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn single_kind(scn: &Scenario, args: &Common) -> Result<HomotopyKind, Failure> {
    match args.homotopy.as_slice() {
        [] => Ok(scn.homotopy.kind),
        [k] => Ok(*k),
        _ => Err(Failure::Config("--homotopy may be given once for this command".into())),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (Command::Solve(args) | Command::Trace(args) | Command::Metrics(args) | Command::Compare(args)) = &cli.command;
    let scn = load_scenario_with(&args.scenario, &args.overrides).map_err(|e| Failure::Config(e.to_string()))?;
    let setup = |e: bl_homotopy::discretization::DiscretizationError| Failure::Config(e.to_string());
    let name = &scn.name;

    match &cli.command {
        Command::Solve(_) => {
            let kind = single_kind(&scn, args)?;
            let run = run_solve(&scn, kind).map_err(setup)?;
            write(&args.out, format!("{name}_solve_{}.csv", kind.as_str()), &solve_csv(&scn, &run))?;
            if let Some(bad) = run.steps.iter().find(|s| !s.outcome.success) {
                return Err(Failure::Solver(format!("time step {} failed: {}", bad.step_index, bad.outcome.verdict)));
            }
        }
        Command::Trace(_) | Command::Metrics(_) => {
            let kind = single_kind(&scn, args)?;
            if kind == HomotopyKind::TargetOnly {
                return Err(Failure::Config("target_only has no homotopy curve to trace".into()));
            }
            let error = if matches!(cli.command, Command::Trace(_)) {
                let run = run_trace(&scn, kind).map_err(setup)?;
                write(&args.out, format!("{name}_trace_{}.csv", kind.as_str()), &trace_csv(&scn, &run))?;
                run.error
            } else {
                let run = run_metrics(&scn, kind).map_err(setup)?;
                write(&args.out, format!("{name}_metrics_{}.csv", kind.as_str()), &metrics_csv(&scn, &run))?;
                run.error
            };
            if let Some(e) = error {
                return Err(Failure::Trace(e));
            }
        }
        Command::Compare(_) => {
            let kinds = if args.homotopy.is_empty() { HomotopyKind::ALL.to_vec() } else { args.homotopy.clone() };
            if kinds.len() < 2 {
                return Err(Failure::Config("compare needs at least two homotopy kinds".into()));
            }
            let cmp = compare_homotopies(&scn, &kinds).map_err(setup)?;
            for run in &cmp.runs {
                write(&args.out, format!("{name}_solve_{}.csv", run.kind.as_str()), &solve_csv(&scn, run))?;
            }
            write(&args.out, format!("{name}_compare.csv"), &compare_csv(&scn, &cmp))?;
            for row in &cmp.rows {
                println!(
                    "{:<20} success={:<5} pc_steps={:<4} newton_iters={}",
                    row.kind.as_str(),
                    row.success,
                    row.pc_steps,
                    row.newton_iters
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Trace(msg)) => {
            eprintln!("trace failure: {msg}");
            ExitCode::from(EXIT_TRACE)
        }
    }
}
