//! Durable run records and the CSV schemas.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use phi4zero::diagnostics::{classify_trace, ScanGrid, ScanOutcome, SignMapCell, SignMapResult};
use phi4zero::solver::{IterationTrace, RunResult};
use phi4zero::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordConfig {
    pub lambda: f64,
    pub n_max: u32,
    pub epsilon_h: f64,
    pub max_iterations: u32,
    pub sweep: String,
    pub closure: String,
    pub freeze: bool,
    pub start: String,
    pub mode: String,
    pub trace_stride: u32,
    pub bound_k0: f64,
}

impl RecordConfig {
    pub fn from_solver(cfg: &SolverConfig, mode: &str, start: &str) -> Self {
        RecordConfig {
            lambda: cfg.lambda.value(),
            n_max: cfg.n_max,
            epsilon_h: cfg.epsilon_h,
            max_iterations: cfg.max_iterations,
            sweep: format!("{:?}", cfg.sweep.order).to_lowercase(),
            closure: format!("{:?}", cfg.sweep.closure).to_lowercase(),
            freeze: cfg.freeze,
            start: start.to_string(),
            mode: mode.to_string(),
            trace_stride: cfg.trace_stride,
            bound_k0: cfg.bound_k0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub n: u32,
    pub h_conv: f64,
    pub delta_conv: Option<f64>,
    pub nu_conv: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentClass {
    pub n: u32,
    pub class: String,
    pub pseudo_period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub per_component: Vec<ComponentClass>,
    pub counts: BTreeMap<String, usize>,
    /// Max delta_conv over the top third of levels; a finite-truncation
    /// proxy for the bound at infinity, nothing more.
    pub delta_infinity_proxy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RecordConfig,
    pub status: String,
    pub iterations_used: u32,
    pub components: Vec<ComponentRecord>,
    pub classification: ClassificationSummary,
    pub tool_version: String,
    pub timestamp: String,
}

pub fn classification_summary(trace: &IterationTrace, result: &RunResult) -> ClassificationSummary {
    let mut per_component = Vec::new();
    let mut counts = BTreeMap::new();
    for n in trace.levels() {
        let t: Vec<f64> = trace.delta_trace(n).into_iter().flatten().collect();
        match classify_trace(&t, 0.05) {
            Ok(c) => {
                let name = c.class.as_str().to_string();
                *counts.entry(name.clone()).or_insert(0) += 1;
                per_component.push(ComponentClass {
                    n,
                    class: name,
                    pseudo_period: c.pseudo_period,
                });
            }
            Err(_) => {
                *counts.entry("insufficient-data".to_string()).or_insert(0) += 1;
                per_component.push(ComponentClass {
                    n,
                    class: "insufficient-data".to_string(),
                    pseudo_period: None,
                });
            }
        }
    }
    let levels: Vec<u32> = (1..=result.n_max()).step_by(2).collect();
    let tail_start = levels.len() - levels.len() / 3;
    let delta_infinity_proxy = levels[tail_start..]
        .iter()
        .filter_map(|&n| result.delta_conv.get(n))
        .fold(None, |acc: Option<f64>, v| {
            Some(match acc {
                Some(a) if a >= v => a,
                _ => v,
            })
        });
    ClassificationSummary {
        per_component,
        counts,
        delta_infinity_proxy,
    }
}

pub fn build_record(
    cfg: &SolverConfig,
    mode: &str,
    start: &str,
    result: &RunResult,
    trace: &IterationTrace,
) -> RunRecord {
    let components = result
        .h_conv
        .iter()
        .map(|(n, h)| ComponentRecord {
            n,
            h_conv: h,
            delta_conv: result.delta_conv.get(n),
            nu_conv: result.nu_conv[((n - 1) / 2) as usize],
        })
        .collect();
    RunRecord {
        config: RecordConfig::from_solver(cfg, mode, start),
        status: result.status.as_str().to_string(),
        iterations_used: result.iterations_used,
        components,
        classification: classification_summary(trace, result),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    }
}

pub fn write_record(path: &Path, record: &RunRecord) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(record)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_record(path: &Path) -> anyhow::Result<RunRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Trace CSV row: one line per (iteration, component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub nu: u32,
    pub n: u32,
    #[serde(rename = "H_value")]
    pub h_value: f64,
    pub delta_value: Option<f64>,
    pub frozen: bool,
}

pub fn write_trace_csv(path: &Path, trace: &IterationTrace) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut rows = Vec::new();
    let snapshot_rows = |rows: &mut Vec<TraceRow>, s: &phi4zero::solver::TraceSnapshot| {
        for (n, h) in s.h.iter() {
            rows.push(TraceRow {
                nu: s.nu,
                n,
                h_value: h,
                delta_value: s.delta.get(n),
                frozen: s.frozen[((n - 1) / 2) as usize],
            });
        }
    };
    snapshot_rows(&mut rows, &trace.initial);
    for s in &trace.snapshots {
        snapshot_rows(&mut rows, s);
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> anyhow::Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Scan CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub n_max: u32,
    pub status: String,
    pub classification: String,
    pub max_nu_conv: Option<u32>,
    pub max_delta_conv: Option<f64>,
}

pub fn write_scan_csv(path: &Path, grid: &ScanGrid) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for cell in &grid.cells {
        let row = match &cell.outcome {
            ScanOutcome::Run {
                status,
                classification,
                max_nu_conv,
                max_delta_conv,
            } => ScanRow {
                lambda: cell.lambda,
                n_max: cell.n_max,
                status: status.as_str().to_string(),
                classification: classification.as_str().to_string(),
                max_nu_conv: *max_nu_conv,
                max_delta_conv: *max_delta_conv,
            },
            ScanOutcome::Failed(_) => ScanRow {
                lambda: cell.lambda,
                n_max: cell.n_max,
                status: "Error".to_string(),
                classification: String::new(),
                max_nu_conv: None,
                max_delta_conv: None,
            },
        };
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub lambda: f64,
    pub first_unstable_n_max: Option<u32>,
}

pub fn write_thresholds_csv(path: &Path, grid: &ScanGrid) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (lambda, th) in grid.instability_thresholds() {
        w.serialize(ThresholdRow {
            lambda,
            first_unstable_n_max: th,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignMapRow {
    pub lambda: f64,
    pub h2: f64,
    pub result: String,
    pub first_violation_n: Option<u32>,
}

pub fn write_signmap_csv(path: &Path, cells: &[SignMapCell]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for c in cells {
        let (result, n) = match c.result {
            SignMapResult::Valid => ("valid", None),
            SignMapResult::Violation { n } => ("violation", Some(n)),
            SignMapResult::ZeroComponent { n } => ("zero", Some(n)),
            SignMapResult::NonFinite { n } => ("nonfinite", Some(n)),
        };
        w.serialize(SignMapRow {
            lambda: c.lambda,
            h2: c.h2,
            result: result.to_string(),
            first_violation_n: n,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: u32,
    pub solver_value: f64,
    pub series_value: f64,
    pub relative_deviation: f64,
}

pub fn write_oracle_csv(path: &Path, rows: &[OracleRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub component: u32,
    pub power: usize,
    pub coefficient: f64,
}

pub fn write_series_csv(
    path: &Path,
    series: &[(u32, phi4zero::series::PowerSeries)],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (n, s) in series {
        for (p, &c) in s.coeffs().iter().enumerate() {
            w.serialize(SeriesRow {
                component: *n,
                power: p,
                coefficient: c,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

