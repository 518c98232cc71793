//! `basin-alloc`: validate, optimise, simulate and report basin scenarios,
//! or serve them over HTTP.
//!
//! Exit codes: 0 success, 1 validation failure (including bad arguments),
//! 2 infeasible, 3 I/O error.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use basin_alloc::io::{
    export_plan, import_plan, import_plan_for, load_scenario_with, resimulate, resolve_scenario_path, LoadError,
    LoadOptions,
};
use basin_alloc::report::{deficit_view, write_csv_reports, Granularity, GroupBy, TextReport};
use basin_alloc::{optimize, CheckReport, CostWeights, OptimizeError, OptimizeOptions};
use basin_service::ServiceConfig;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "basin-alloc", version, about = "River-basin water allocation")]
struct Cli {
    /// Accept unknown scenario fields (reported as warnings).
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a scenario and run every consistency check.
    Validate { scenario: String },
    /// Compute an allocation plan.
    Optimize {
        scenario: String,
        /// Objective weights `deficit,economic,co2`.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<CostWeights>,
        /// Solve only the first N days of the horizon.
        #[arg(long)]
        horizon_days: Option<usize>,
        /// Chord segments of the squared-deficit curve.
        #[arg(long)]
        segments: Option<usize>,
        /// Serve demand kinds in strict priority order.
        #[arg(long)]
        lexicographic: bool,
        /// Plan file to write.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Audit a plan against its scenario's network.
    Simulate { scenario: String, plan: PathBuf },
    /// Summarise a plan; optionally write CSV tables.
    Report {
        plan: PathBuf,
        /// Directory for deficits/allocations/sources/kpis CSV files.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Deficit table granularity: daily, weekly or monthly.
        #[arg(long, default_value = "monthly")]
        granularity: Granularity,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Store directory for scenarios, jobs and plans.
        #[arg(long, default_value = "basin-store")]
        store: PathBuf,
        /// Maximum simultaneous optimisations (default: available cores).
        #[arg(long)]
        max_parallel_jobs: Option<usize>,
    },
}

fn parse_weights(s: &str) -> Result<CostWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [w1, w2, w3] = parts[..] else {
        return Err(format!("expected three comma-separated weights, got {}", parts.len()));
    };
    let w = CostWeights::new(w1, w2, w3);
    w.validate()?;
    Ok(w)
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

const VALIDATION: u8 = 1;
const INFEASIBLE: u8 = 2;
const IO: u8 = 3;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn print_report(report: &CheckReport) {
    for e in &report.errors {
        eprintln!("error [{}]: {}", e.code, e.message);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.identities {
        println!(
            "identity {}: {} = {} (residual {}) {}",
            c.name,
            c.actual,
            c.expected,
            c.residual,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
}

fn load_failure(e: LoadError) -> Failure {
    match e {
        LoadError::Io { .. } => fail(IO, e.to_string()),
        LoadError::Validation(report) => {
            print_report(&report);
            fail(VALIDATION, format!("scenario failed validation with {} error(s)", report.errors.len()))
        }
        other => fail(VALIDATION, other.to_string()),
    }
}

fn load(name: &str, lenient: bool) -> Result<basin_alloc::LoadedScenario, Failure> {
    let path = resolve_scenario_path(name);
    load_scenario_with(&path, LoadOptions { strict: !lenient }).map_err(load_failure)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let l = load(&scenario, cli.lenient)?;
            print_report(&l.report);
            let s = &l.scenario;
            println!(
                "`{}` is valid: {} nodes, {} links, {} units, {} days from {}",
                s.name,
                s.network.nodes.len(),
                s.network.links.len(),
                s.units.len(),
                s.horizon.days,
                s.horizon.start
            );
            Ok(())
        }
        Command::Optimize {
            scenario,
            weights,
            horizon_days,
            segments,
            lexicographic,
            output,
        } => {
            let l = load(&scenario, cli.lenient)?;
            let opts = OptimizeOptions {
                weights,
                horizon_days,
                segments,
                lexicographic: lexicographic.then_some(true),
                ..OptimizeOptions::default()
            };
            let plan = optimize(&l.scenario, &opts).map_err(|e| match e {
                OptimizeError::Infeasible { .. } | OptimizeError::Unbounded => fail(INFEASIBLE, e.to_string()),
                OptimizeError::Invalid(report) => {
                    print_report(&report);
                    fail(VALIDATION, "scenario failed validation")
                }
                other => fail(VALIDATION, other.to_string()),
            })?;
            println!("{}", TextReport(&plan));
            if let Some(path) = output {
                export_plan(&plan, &path).map_err(load_failure)?;
                println!("plan written to {}", path.display());
            }
            Ok(())
        }
        Command::Simulate { scenario, plan } => {
            let l = load(&scenario, cli.lenient)?;
            let file = import_plan_for(&plan, &l.scenario).map_err(load_failure)?;
            let report = resimulate(&file.plan, &l.scenario).map_err(load_failure)?;
            for issue in &report.issues {
                println!("{} at {} day {}: {:.3e}", issue.code, issue.element, issue.t, issue.amount);
            }
            for (id, traj) in &report.storage_trajectories {
                let (lo, hi) = traj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                println!("storage {id}: {:.3} → {:.3} hm³ (range {lo:.3}..{hi:.3})", traj[0], traj[traj.len() - 1]);
            }
            println!(
                "max mass-balance residual {:.3e}; {}",
                report.max_abs_residual,
                if report.feasible { "feasible" } else { "INFEASIBLE" }
            );
            if report.feasible {
                Ok(())
            } else {
                Err(fail(INFEASIBLE, "plan violates the network constraints"))
            }
        }
        Command::Report { plan, csv, granularity } => {
            let file = import_plan(&plan).map_err(load_failure)?;
            let p = &file.plan;
            println!("{}", TextReport(p));
            let view = deficit_view(p, granularity, GroupBy::Kind);
            println!("\n{granularity:?} deficit (hm³ / average %)");
            for series in &view.series {
                let cells: Vec<String> = series
                    .points
                    .iter()
                    .map(|pt| match pt.average_percent {
                        Some(a) => format!("{:.3}/{a:.1}%", pt.deficit),
                        None => format!("{:.3}/-", pt.deficit),
                    })
                    .collect();
                println!("  {:<5}{}", series.key, cells.join("  "));
            }
            if let Some(dir) = csv {
                write_csv_reports(p, &dir).map_err(|e| fail(IO, e.to_string()))?;
                println!("CSV tables written to {}", dir.display());
            }
            Ok(())
        }
        Command::Serve {
            port,
            store,
            max_parallel_jobs,
        } => {
            let mut config = ServiceConfig::new(store);
            if let Some(n) = max_parallel_jobs {
                config.max_parallel_jobs = n;
            }
            let addr = SocketAddr::from((Ipv4Addr::UNSPECIFIED, port));
            let rt = tokio::runtime::Runtime::new().map_err(|e| fail(IO, e.to_string()))?;
            println!("serving on http://{addr} (store {})", config.store_dir.display());
            rt.block_on(basin_service::serve(addr, config)).map_err(|e| fail(IO, e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("basin-alloc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
