use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beltmp::sim::{execute, traces_to_csv, waypoints_from_legs};
use beltmp::tmp::SolveReport;
use beltmp_cli::{
    load_inputs, render_svg, rows_to_csv, run_solve, run_sweep, CliError, SweepSpec,
};

#[derive(Parser)]
#[command(name = "beltmp", about = "Belief-space task-and-motion planner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario/domain/problem instance and write report artifacts.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// Cost configuration (1..=4).
        #[arg(long)]
        config: u8,
        /// Roadmap sample density override (samples per m^2 of free space).
        #[arg(long)]
        density: Option<f64>,
        /// Goal covariance-trace bound override (m^2).
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for report.json / plan.txt / plan.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of solves described by a sweep spec and emit CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a solved plan in closed-loop simulation.
    Exec {
        /// A report.json produced by `solve`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Scenario file the report was solved from.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV of execution traces (defaults to stdout summary only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_NO_PLAN: u8 = 2;
const EXIT_INPUT: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve {
            scenario,
            domain,
            problem,
            config,
            density,
            eta,
            seed,
            out,
        } => {
            let inputs = load_inputs(&scenario, &domain, &problem)?;
            let sol = run_solve(&inputs, config, density, eta, seed)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.json"), sol.report.to_json())?;
                std::fs::write(dir.join("plan.txt"), &sol.report.plan_text)?;
                std::fs::write(dir.join("plan.svg"), render_svg(&inputs.scenario, &sol.report))?;
            }
            println!("{}", sol.report.plan_text);
            if sol.report.feasible {
                println!(
                    "feasible plan (cost {:.3}, {:.3}s)",
                    sol.plan.as_ref().map(|p| p.total_cost).unwrap_or(f64::NAN),
                    sol.report.wall_time_s
                );
                Ok(ExitCode::SUCCESS)
            } else {
                match sol.report.violated_step {
                    Some(step) => println!("no feasible plan: step {step} violates the bound"),
                    None => println!("no feasible plan"),
                }
                Ok(ExitCode::from(EXIT_NO_PLAN))
            }
        }
        Command::Sweep { spec, out } => {
            let spec = SweepSpec::from_file(&spec)?;
            let rows = match &spec.out_dir {
                Some(dir) => beltmp_cli::run_experiment(&spec, dir)?,
                None => run_sweep(&spec)?,
            };
            let csv = rows_to_csv(&rows);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None if spec.out_dir.is_none() => print!("{csv}"),
                None => {}
            }
            let any_feasible = rows.iter().any(|r| r.feasible);
            Ok(if any_feasible {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NO_PLAN)
            })
        }
        Command::Exec {
            report,
            runs,
            scenario,
            seed,
            out,
        } => {
            let report: SolveReport = serde_json::from_str(&std::fs::read_to_string(report)?)
                .map_err(CliError::Spec)?;
            if !report.feasible || report.motion_legs.is_empty() {
                println!("report contains no feasible plan to execute");
                return Ok(ExitCode::from(EXIT_NO_PLAN));
            }
            let scenario = beltmp::scenario::Scenario::from_file(&scenario)?;
            let map = scenario
                .world_map()
                .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
            let noise = scenario.noise_model();
            let start = scenario.start_belief();
            let waypoints = waypoints_from_legs(&report.motion_legs);
            let goal_region = report
                .goal_region
                .clone()
                .ok_or_else(|| CliError::Io(std::io::Error::other("report has no goal region")))?;
            let traces = execute(&map, &noise, &start, &waypoints, &goal_region, runs, seed)
                .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
            let succ = traces.iter().filter(|t| t.success).count();
            let avg_nees: f64 =
                traces.iter().map(|t| t.avg_nees).sum::<f64>() / traces.len() as f64;
            println!(
                "{succ}/{} runs reached the goal; mean NEES {avg_nees:.3}",
                traces.len()
            );
            if let Some(path) = out {
                std::fs::write(&path, traces_to_csv(&traces))?;
                std::fs::write(
                    path.with_extension("svg"),
                    beltmp_cli::render_traces_svg(&scenario, &traces),
                )?;
            }
            Ok(if succ > 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NO_PLAN)
            })
        }
    }
}
