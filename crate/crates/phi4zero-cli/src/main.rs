//! Command-line experiments on the zero-dimensional phi^4 hierarchy.
//!
//! Exit codes: 0 success (including a recorded MaxIterations run),
//! 2 flag/validation/IO errors, 3 diverged or degenerate runs (and a
//! non-converged solver under `oracle`), 1 oracle deviations over tolerance.

mod plot;
mod record;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phi4zero::diagnostics::{sign_map, stability_scan};
use phi4zero::model::GreenSequence;
use phi4zero::series::{oracle_compare, series_solve};
use phi4zero::solver::{run, two_step_run, warm_start_run, RunResult};
use phi4zero::{ClosureMode, Coupling, RunStatus, SolverConfig, SplittingSequence, SweepOrder};

#[derive(Parser)]
#[command(name = "phi4zero", version, about = "Iterative construction of the zero-dimensional phi^4 solution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the iteration for one (lambda, n_max) and record the result.
    Solve(SolveArgs),
    /// Run a (lambda, n_max) grid and summarize stability per cell.
    Scan(ScanArgs),
    /// Map the upward sign recursion over an (H^2, lambda) grid.
    Signmap(SignmapArgs),
    /// Render delta traces (or ratio curves) from a trace CSV as SVG.
    Plot(PlotArgs),
    /// Compare a converged run against the power-series oracle.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Upward,
    Jacobi,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosureArg {
    Zero,
    Fundamental,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Plain,
    TwoStep,
    Warm,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Fundamental,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got {s}")),
    }
}

#[derive(Args)]
struct CommonSolverArgs {
    /// Convergence tolerance epsilon_H
    #[arg(long, default_value_t = 1e-10)]
    epsilon: f64,
    /// Iteration limit
    #[arg(long, default_value_t = 200)]
    max_iter: u32,
    /// Closure for the component above the truncation
    #[arg(long, value_enum, default_value_t = ClosureArg::Zero)]
    closure: ClosureArg,
    /// Sweep order
    #[arg(long, value_enum, default_value_t = SweepArg::Upward)]
    sweep: SweepArg,
    /// Freeze components as they converge
    #[arg(long, default_value = "on", value_parser = parse_switch)]
    freeze: bool,
    /// Divergence-guard constant K_0
    #[arg(long, default_value_t = 2.0)]
    bound_k0: f64,
    /// Output directory (default $PHI4ZERO_OUT_DIR or ./phi4zero-out)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonSolverArgs {
    fn build(&self, lambda: f64, n_max: u32) -> anyhow::Result<SolverConfig> {
        let mut cfg = SolverConfig::new(Coupling::new(lambda)?, n_max);
        cfg.epsilon_h = self.epsilon;
        cfg.max_iterations = self.max_iter;
        cfg.sweep.order = match self.sweep {
            SweepArg::Upward => SweepOrder::Upward,
            SweepArg::Jacobi => SweepOrder::Jacobi,
        };
        cfg.sweep.closure = match self.closure {
            ClosureArg::Zero => ClosureMode::Zero,
            ClosureArg::Fundamental => ClosureMode::Fundamental,
        };
        cfg.freeze = self.freeze;
        cfg.bound_k0 = self.bound_k0;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = self
            .out_dir
            .clone()
            .or_else(|| std::env::var_os("PHI4ZERO_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("phi4zero-out"));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Coupling constant
    #[arg(long)]
    lambda: f64,
    /// Truncation dimension (odd, >= 5)
    #[arg(long, default_value_t = 55)]
    n_max: u32,
    /// Start sequence
    #[arg(long, value_enum, default_value_t = StartArg::Fundamental)]
    start: StartArg,
    /// plain, two-step (composed sweeps), or warm (seeded from --seed)
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Run record to seed a warm start from
    #[arg(long)]
    seed: Option<PathBuf>,
    /// Keep every stride-th trace snapshot
    #[arg(long, default_value_t = 1)]
    trace_stride: u32,
    /// Where to write the run record (default <out-dir>/solve-l<lambda>-n<n_max>.json)
    #[arg(long)]
    record: Option<PathBuf>,
    /// Also write the full trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: CommonSolverArgs,
}

#[derive(Args)]
struct ScanArgs {
    /// Coupling values
    #[arg(long, value_delimiter = ',',
          default_value = "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.10")]
    lambdas: Vec<f64>,
    /// Truncation dimensions
    #[arg(long, value_delimiter = ',', default_value = "55")]
    n_maxes: Vec<u32>,
    /// Scan CSV path (default <out-dir>/scan.csv)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Threshold summary CSV path (default <out-dir>/thresholds.csv)
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[command(flatten)]
    common: CommonSolverArgs,
}

#[derive(Args)]
struct SignmapArgs {
    /// Coupling values
    #[arg(long, value_delimiter = ',',
          default_value = "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.10")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 0.99)]
    h2_min: f64,
    #[arg(long, default_value_t = 1.05)]
    h2_max: f64,
    #[arg(long, default_value_t = 25)]
    h2_count: u32,
    #[arg(long, default_value_t = 55)]
    n_max: u32,
    /// Output CSV path (default <out-dir>/signmap.csv)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Output directory (default $PHI4ZERO_OUT_DIR or ./phi4zero-out)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV written by `solve --trace`
    #[arg(long)]
    trace: PathBuf,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    /// Plot |H_nu / H_conv| ratio curves instead of delta traces
    #[arg(long)]
    ratios: bool,
    #[arg(long, default_value_t = 900)]
    width: u32,
    #[arg(long, default_value_t = 560)]
    height: u32,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    lambda: f64,
    /// Series truncation order (>= 1)
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 29)]
    n_max: u32,
    /// Maximum accepted relative deviation for H^2 and H^4 (higher
    /// components deviate at the scale of the first omitted series term)
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Deviation table path (default <out-dir>/oracle.csv)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also dump the series coefficients as CSV
    #[arg(long)]
    dump_series: Option<PathBuf>,
    #[command(flatten)]
    common: CommonSolverArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Signmap(args) => cmd_signmap(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<u8> {
    let mut cfg = args.common.build(args.lambda, args.n_max)?;
    cfg.trace_stride = args.trace_stride;
    cfg.validate()?;

    let mode_name = match args.mode {
        ModeArg::Plain => "plain",
        ModeArg::TwoStep => "two-step",
        ModeArg::Warm => "warm",
    };
    let (result, trace) = match args.mode {
        ModeArg::Plain => run(&cfg)?,
        ModeArg::TwoStep => two_step_run(&cfg)?,
        ModeArg::Warm => {
            let seed_path = args
                .seed
                .ok_or_else(|| anyhow::anyhow!("--mode warm requires --seed <record.json>"))?;
            let previous = load_seed(&seed_path)?;
            warm_start_run(&cfg, &previous)?
        }
    };

    let out_dir = args.common.out_dir()?;
    let record_path = args.record.unwrap_or_else(|| {
        out_dir.join(format!("solve-l{}-n{}.json", args.lambda, args.n_max))
    });
    let rec = record::build_record(&cfg, mode_name, "fundamental", &result, &trace);
    record::write_record(&record_path, &rec)?;
    if let Some(trace_path) = &args.trace {
        record::write_trace_csv(trace_path, &trace)?;
    }

    println!(
        "status={} iterations={} H2={} record={}",
        result.status.as_str(),
        result.iterations_used,
        result.h_conv.component(1),
        record_path.display()
    );
    Ok(match result.status {
        RunStatus::Diverged | RunStatus::Degenerate => 3,
        _ => 0,
    })
}

fn load_seed(path: &Path) -> anyhow::Result<RunResult> {
    let rec = record::read_record(path)?;
    let n_max = rec.config.n_max;
    let values: Vec<f64> = rec.components.iter().map(|c| c.h_conv).collect();
    let deltas: Vec<Option<f64>> = rec.components.iter().map(|c| c.delta_conv).collect();
    let nu_conv: Vec<Option<u32>> = rec.components.iter().map(|c| c.nu_conv).collect();
    let status = match rec.status.as_str() {
        "Converged" => RunStatus::Converged,
        "MaxIterations" => RunStatus::MaxIterations,
        "Diverged" => RunStatus::Diverged,
        _ => RunStatus::Degenerate,
    };
    Ok(RunResult {
        h_conv: GreenSequence::new(n_max, values)?,
        delta_conv: SplittingSequence::new(n_max, deltas)?,
        nu_conv,
        status,
        iterations_used: rec.iterations_used,
    })
}

fn cmd_scan(args: ScanArgs) -> anyhow::Result<u8> {
    if args.lambdas.is_empty() || args.n_maxes.is_empty() {
        anyhow::bail!("scan grids must be nonempty");
    }
    let first = *args.lambdas.first().unwrap();
    let base = args.common.build(first, *args.n_maxes.first().unwrap())?;
    let grid = stability_scan(&args.lambdas, &args.n_maxes, &base);

    let out_dir = args.common.out_dir()?;
    let csv_path = args.csv.unwrap_or_else(|| out_dir.join("scan.csv"));
    let th_path = args.thresholds.unwrap_or_else(|| out_dir.join("thresholds.csv"));
    record::write_scan_csv(&csv_path, &grid)?;
    record::write_thresholds_csv(&th_path, &grid)?;

    for (lambda, th) in grid.instability_thresholds() {
        match th {
            Some(nm) => println!("lambda={lambda}: first non-converged n_max = {nm}"),
            None => println!("lambda={lambda}: converged on every n_max in the grid"),
        }
    }
    println!("scan written to {}", csv_path.display());
    Ok(0)
}

fn cmd_signmap(args: SignmapArgs) -> anyhow::Result<u8> {
    if args.h2_count == 0 {
        anyhow::bail!("--h2-count must be at least 1");
    }
    let h2_grid: Vec<f64> = (0..args.h2_count)
        .map(|i| {
            if args.h2_count == 1 {
                args.h2_min
            } else {
                args.h2_min
                    + (args.h2_max - args.h2_min) * i as f64 / (args.h2_count - 1) as f64
            }
        })
        .collect();
    let cells = sign_map(&args.lambdas, &h2_grid, args.n_max)?;

    let dir = args
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("PHI4ZERO_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("phi4zero-out"));
    std::fs::create_dir_all(&dir)?;
    let csv_path = args.csv.unwrap_or_else(|| dir.join("signmap.csv"));
    record::write_signmap_csv(&csv_path, &cells)?;

    let valid = cells
        .iter()
        .filter(|c| matches!(c.result, phi4zero::diagnostics::SignMapResult::Valid))
        .count();
    println!(
        "{valid}/{} cells valid through n_max={}; map written to {}",
        cells.len(),
        args.n_max,
        csv_path.display()
    );
    Ok(0)
}

fn cmd_plot(args: PlotArgs) -> anyhow::Result<u8> {
    let rows = record::read_trace_csv(&args.trace)?;
    if rows.is_empty() {
        anyhow::bail!("trace file {} holds no rows", args.trace.display());
    }
    let mut levels: Vec<u32> = rows.iter().map(|r| r.n).collect();
    levels.sort_unstable();
    levels.dedup();

    let mut series = Vec::new();
    if args.ratios {
        for &n in &levels {
            let mut comp: Vec<&record::TraceRow> = rows.iter().filter(|r| r.n == n).collect();
            comp.sort_by_key(|r| r.nu);
            let Some(first_frozen) = comp.iter().find(|r| r.frozen) else {
                continue;
            };
            let nu_conv = first_frozen.nu;
            let reference = first_frozen.h_value;
            if reference == 0.0 || !reference.is_finite() {
                continue;
            }
            let pts: Vec<(f64, f64)> = comp
                .iter()
                .filter(|r| r.nu <= nu_conv && r.nu >= 1)
                .map(|r| (r.nu as f64, (r.h_value / reference).abs()))
                .collect();
            series.push((format!("n={n}"), pts));
        }
    } else {
        for &n in &levels {
            let mut pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.delta_value.map(|d| (r.nu as f64, d)))
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            series.push((format!("n={n}"), pts));
        }
    }

    let chart = plot::Chart {
        title: if args.ratios {
            "component ratio curves"
        } else {
            "splitting-sequence traces"
        },
        x_label: "iteration nu",
        y_label: if args.ratios { "|H_nu / H_conv|" } else { "delta_n" },
        width: args.width,
        height: args.height,
        series,
    };
    std::fs::write(&args.out, plot::render(&chart))?;
    println!("figure written to {}", args.out.display());
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<u8> {
    if args.order < 1 {
        anyhow::bail!("--order must be at least 1");
    }
    let cfg = args.common.build(args.lambda, args.n_max)?;
    let (result, trace) = run(&cfg)?;
    let out_dir = args.common.out_dir()?;

    if result.status != RunStatus::Converged {
        let rec = record::build_record(&cfg, "plain", "fundamental", &result, &trace);
        let path = out_dir.join(format!("oracle-failed-l{}-n{}.json", args.lambda, args.n_max));
        record::write_record(&path, &rec)?;
        eprintln!(
            "solver did not converge (status {}); record written to {}",
            result.status.as_str(),
            path.display()
        );
        return Ok(3);
    }

    let lambda = Coupling::new(args.lambda)?;
    let devs = oracle_compare(&result, args.order, lambda)?;
    let rows: Vec<record::OracleRow> = devs
        .iter()
        .map(|d| record::OracleRow {
            n: d.n,
            solver_value: d.solver,
            series_value: d.series,
            relative_deviation: d.relative,
        })
        .collect();
    let csv_path = args.csv.unwrap_or_else(|| out_dir.join("oracle.csv"));
    record::write_oracle_csv(&csv_path, &rows)?;

    if let Some(dump) = &args.dump_series {
        let series = series_solve(args.n_max, args.order)?;
        record::write_series_csv(dump, &series)?;
    }

    let worst = rows
        .iter()
        .map(|r| r.relative_deviation)
        .fold(0.0f64, f64::max);
    let worst_low = rows
        .iter()
        .filter(|r| r.n <= 3)
        .map(|r| r.relative_deviation)
        .fold(0.0f64, f64::max);
    println!(
        "H^2/H^4 deviation {worst_low:e}, max over {} components {worst:e}; table written to {}",
        rows.len(),
        csv_path.display()
    );
    if worst_low > args.tol {
        eprintln!("H^2/H^4 deviation exceeds tolerance {:e}", args.tol);
        return Ok(1);
    }
    Ok(0)
}
