//! Iteration driver: sweeps from a start sequence to convergence or
//! divergence, freezing components as they settle.
//!
//! Convergence is tested per component after every sweep against the value
//! the component had before it: an absolute criterion below `epsilon_h`,
//! a relative one otherwise. A component that passes is frozen (kept
//! constant and read as a constant by the still-active levels) and the
//! iteration index is recorded as its nu_conv. The run stops when every
//! component is frozen, when the iteration limit is reached, or when a
//! sweep produces a degenerate or non-finite value.

use serde::{Deserialize, Serialize};

use crate::combinatorics::ln_factorial;
use crate::error::{Error, Result};
use crate::mapping::{sweep, FlagKind, SweepConfig};
use crate::model::{
    check_n_max, closure_value, extract_splitting, fundamental_sequence, Coupling, GreenSequence,
    SplittingSequence,
};

/// Where the iteration starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartPoint {
    /// The explicit fundamental sequence.
    Fundamental,
    /// A caller-supplied sequence with the same n_max as the run.
    Explicit(GreenSequence),
}

impl Default for StartPoint {
    fn default() -> Self {
        StartPoint::Fundamental
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: Coupling,
    pub n_max: u32,
    /// Per-component convergence tolerance (the paper's epsilon_H).
    pub epsilon_h: f64,
    pub max_iterations: u32,
    pub sweep: SweepConfig,
    /// Freeze components once they converge (paper-faithful default).
    pub freeze: bool,
    pub start: StartPoint,
    /// Keep every stride-th snapshot in the trace (the final one always).
    pub trace_stride: u32,
    /// K_0 used by the divergence guard: a component whose magnitude
    /// exceeds 1e3 * n! * k0^n terminates the run as diverged.
    pub bound_k0: f64,
}

impl SolverConfig {
    pub fn new(lambda: Coupling, n_max: u32) -> Self {
        SolverConfig {
            lambda,
            n_max,
            epsilon_h: 1e-10,
            max_iterations: 200,
            sweep: SweepConfig::default(),
            freeze: true,
            start: StartPoint::Fundamental,
            trace_stride: 1,
            bound_k0: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_n_max(self.n_max)?;
        if !(self.epsilon_h > 0.0 && self.epsilon_h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon_h must be positive, got {}",
                self.epsilon_h
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.trace_stride < 1 {
            return Err(Error::InvalidConfig("trace_stride must be >= 1".into()));
        }
        if !(self.bound_k0 > 0.0 && self.bound_k0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bound_k0 must be positive, got {}",
                self.bound_k0
            )));
        }
        if let StartPoint::Explicit(h) = &self.start {
            if h.n_max() != self.n_max {
                return Err(Error::InvalidConfig(format!(
                    "explicit start has n_max={}, run wants {}",
                    h.n_max(),
                    self.n_max
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Diverged,
    Degenerate,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxIterations => "MaxIterations",
            RunStatus::Diverged => "Diverged",
            RunStatus::Degenerate => "Degenerate",
        }
    }
}

/// State of the sequence after one recorded iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSnapshot {
    pub nu: u32,
    pub h: GreenSequence,
    pub delta: SplittingSequence,
    pub frozen: Vec<bool>,
}

/// Recorded history of a run. `initial` is the start state (nu = 0);
/// `snapshots` hold the post-sweep states for nu = 1, 2, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub initial: TraceSnapshot,
    pub snapshots: Vec<TraceSnapshot>,
    pub nu_conv: Vec<Option<u32>>,
    pub status: RunStatus,
}

impl IterationTrace {
    pub fn n_max(&self) -> u32 {
        self.initial.h.n_max()
    }

    /// Odd levels of the traced sequence.
    pub fn levels(&self) -> impl Iterator<Item = u32> {
        (1..=self.n_max()).step_by(2)
    }

    /// delta_n over the recorded iterations nu >= 1 (undefined entries kept).
    pub fn delta_trace(&self, n: u32) -> Vec<Option<f64>> {
        self.snapshots.iter().map(|s| s.delta.get(n)).collect()
    }

    /// H^{n+1} over the recorded iterations nu >= 1.
    pub fn h_trace(&self, n: u32) -> Vec<f64> {
        self.snapshots
            .iter()
            .map(|s| s.h.get(n).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn nu_conv_at(&self, n: u32) -> Option<u32> {
        self.nu_conv[crate::model::level_index(n)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Converged values, or the last cleanly obtained values when the run
    /// did not converge.
    pub h_conv: GreenSequence,
    pub delta_conv: SplittingSequence,
    pub nu_conv: Vec<Option<u32>>,
    pub status: RunStatus,
    pub iterations_used: u32,
}

impl RunResult {
    pub fn n_max(&self) -> u32 {
        self.h_conv.n_max()
    }

    pub fn max_nu_conv(&self) -> Option<u32> {
        self.nu_conv.iter().flatten().max().copied()
    }
}

/// Per-component stopping test: absolute below epsilon_h, relative above.
/// Non-finite inputs never count as converged.
pub fn component_converged(prev: f64, next: f64, epsilon_h: f64) -> bool {
    if !prev.is_finite() || !next.is_finite() {
        return false;
    }
    if prev.abs() <= epsilon_h {
        (next - prev).abs() < epsilon_h
    } else {
        (next / prev - 1.0).abs() < epsilon_h
    }
}

fn guard_exceeded(values: &[f64], k0: f64) -> bool {
    let ln_k0 = k0.ln();
    let ln_margin = 1e3f64.ln();
    values.iter().enumerate().any(|(k, &v)| {
        let n = 2 * k as u32 + 1;
        v != 0.0 && v.abs().ln() > ln_margin + ln_factorial(n) + n as f64 * ln_k0
    })
}

fn drive(config: &SolverConfig, sweeps_per_iteration: u32) -> Result<(RunResult, IterationTrace)> {
    config.validate()?;
    let lambda = config.lambda;
    let n_max = config.n_max;
    let len = ((n_max + 1) / 2) as usize;
    let closure_val = closure_value(config.sweep.closure, lambda, n_max)?;

    let (h_start, delta_start) = match &config.start {
        StartPoint::Fundamental => fundamental_sequence(lambda, n_max)?,
        StartPoint::Explicit(h) => {
            let d = extract_splitting(h, lambda);
            (h.clone(), d)
        }
    };

    let mut h_cur = h_start.clone();
    let mut delta_cur = delta_start.clone();
    let mut frozen = vec![false; len];
    let mut nu_conv: Vec<Option<u32>> = vec![None; len];
    let mut snapshots = Vec::new();
    let initial = TraceSnapshot {
        nu: 0,
        h: h_start,
        delta: delta_start,
        frozen: frozen.clone(),
    };

    let mut status = RunStatus::MaxIterations;
    let mut iterations_used = config.max_iterations;

    for nu in 1..=config.max_iterations {
        let mut out = sweep(&h_cur, lambda, config.sweep, &frozen, closure_val);
        let mut flags = out.flags.clone();
        for _ in 1..sweeps_per_iteration {
            if !flags.is_empty() {
                break;
            }
            out = sweep(&out.h_next, lambda, config.sweep, &frozen, closure_val);
            flags.extend(out.flags.iter().copied());
        }

        let trouble = if !flags.is_empty() {
            let degenerate = flags
                .iter()
                .any(|f| matches!(f.kind, FlagKind::ZeroComponent | FlagKind::VanishingDenominator));
            Some(if degenerate {
                RunStatus::Degenerate
            } else {
                RunStatus::Diverged
            })
        } else if !out.h_next.is_finite() {
            Some(RunStatus::Diverged)
        } else if guard_exceeded(out.h_next.values(), config.bound_k0) {
            Some(RunStatus::Diverged)
        } else {
            None
        };

        if let Some(bad) = trouble {
            // record the offending state, keep the last clean one as result
            snapshots.push(TraceSnapshot {
                nu,
                h: out.h_next,
                delta: out.delta_next,
                frozen: frozen.clone(),
            });
            status = bad;
            iterations_used = nu;
            break;
        }

        // merge frozen deltas into this sweep's splitting values
        let mut delta_vals = out.delta_next.values().to_vec();
        for (k, v) in delta_vals.iter_mut().enumerate() {
            if frozen[k] {
                *v = delta_cur.values()[k];
            }
        }
        let delta_next = SplittingSequence::new(n_max, delta_vals)?;

        let mut all_settled = true;
        for k in 0..len {
            if frozen[k] {
                continue;
            }
            let passed = component_converged(
                h_cur.values()[k],
                out.h_next.values()[k],
                config.epsilon_h,
            );
            if passed {
                if config.freeze {
                    frozen[k] = true;
                    nu_conv[k] = Some(nu);
                } else if nu_conv[k].is_none() {
                    nu_conv[k] = Some(nu);
                }
            } else {
                all_settled = false;
                if !config.freeze {
                    nu_conv[k] = None;
                }
            }
        }

        h_cur = out.h_next;
        delta_cur = delta_next;

        if nu % config.trace_stride == 0 || all_settled || nu == config.max_iterations {
            snapshots.push(TraceSnapshot {
                nu,
                h: h_cur.clone(),
                delta: delta_cur.clone(),
                frozen: frozen.clone(),
            });
        }

        if all_settled {
            status = RunStatus::Converged;
            iterations_used = nu;
            break;
        }
    }

    let result = RunResult {
        h_conv: h_cur,
        delta_conv: delta_cur,
        nu_conv: nu_conv.clone(),
        status,
        iterations_used,
    };
    let trace = IterationTrace {
        initial,
        snapshots,
        nu_conv,
        status,
    };
    Ok((result, trace))
}

/// Run the iteration from the configured start.
pub fn run(config: &SolverConfig) -> Result<(RunResult, IterationTrace)> {
    drive(config, 1)
}

/// Run seeded from a previous result; components are truncated or extended
/// with fundamental values to match the configured n_max.
pub fn warm_start_run(
    config: &SolverConfig,
    previous: &RunResult,
) -> Result<(RunResult, IterationTrace)> {
    config.validate()?;
    let seed = reconcile_seed(&previous.h_conv, config.lambda, config.n_max)?;
    let mut cfg = config.clone();
    cfg.start = StartPoint::Explicit(seed);
    drive(&cfg, 1)
}

fn reconcile_seed(h: &GreenSequence, lambda: Coupling, n_max: u32) -> Result<GreenSequence> {
    if h.n_max() == n_max {
        return Ok(h.clone());
    }
    let len = ((n_max + 1) / 2) as usize;
    let mut values: Vec<f64> = h.values().iter().copied().take(len).collect();
    if values.len() < len {
        let (h0, _) = fundamental_sequence(lambda, n_max)?;
        values.extend_from_slice(&h0.values()[values.len()..]);
    }
    GreenSequence::new(n_max, values)
}

/// Run with two sweeps composed per iteration; nu counts composed steps.
pub fn two_step_run(config: &SolverConfig) -> Result<(RunResult, IterationTrace)> {
    drive(config, 2)
}
