//! Trace classification, oscillation measures, ratio curves, parameter
//! scans and the upward sign map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expected_sign, level_index, sum_b, sum_c, Coupling};
use crate::solver::{run, IterationTrace, RunStatus, SolverConfig};

/// Shape of a per-component trace over the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraceClass {
    Monotone,
    DampedOscillation,
    AmplifiedOscillation,
    NonOscillatoryDivergent,
}

impl TraceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceClass::Monotone => "monotone",
            TraceClass::DampedOscillation => "damped-oscillation",
            TraceClass::AmplifiedOscillation => "amplified-oscillation",
            TraceClass::NonOscillatoryDivergent => "non-oscillatory-divergent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceClassification {
    pub class: TraceClass,
    /// Mean spacing of local maxima; set only for the oscillation classes.
    pub pseudo_period: Option<f64>,
    /// Gaps between consecutive extrema of the post-burn-in trace.
    pub extrema_amplitudes: Vec<f64>,
}

/// Samples ignored at the head of a trace before classification.
pub const BURN_IN: usize = 3;

/// Relative floor below which a first difference counts as no movement.
const SIGN_FLOOR: f64 = 1e-12;

/// Classify a trace: monotone when the first differences keep one sign
/// after the burn-in, or when whatever remains after the burn-in is an
/// already-settled tail (post-burn-in range below `tolerance` of the full
/// range). Otherwise extrema are extracted and successive gap amplitudes
/// decide between damped, amplified, and irregular.
pub fn classify_trace(values: &[f64], tolerance: f64) -> Result<TraceClassification> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(values.len()));
    }
    let w = &values[BURN_IN.min(values.len() - 1)..];
    let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if w.len() < 2 || scale == 0.0 {
        return Ok(TraceClassification {
            class: TraceClass::Monotone,
            pseudo_period: None,
            extrema_amplitudes: Vec::new(),
        });
    }
    let floor = SIGN_FLOOR * scale;
    let signs: Vec<i8> = w
        .windows(2)
        .map(|p| {
            let d = p[1] - p[0];
            if d.abs() <= floor {
                0
            } else if d > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let first_sign = signs.iter().copied().find(|&s| s != 0);
    let one_signed = match first_sign {
        None => true,
        Some(s0) => signs.iter().all(|&s| s == 0 || s == s0),
    };
    if one_signed {
        return Ok(TraceClassification {
            class: TraceClass::Monotone,
            pseudo_period: None,
            extrema_amplitudes: Vec::new(),
        });
    }

    // settled tail: the remaining movement is negligible against the full trace
    let full_range = range(values);
    let post_range = range(w);
    if post_range <= tolerance * full_range {
        return Ok(TraceClassification {
            class: TraceClass::Monotone,
            pseudo_period: None,
            extrema_amplitudes: Vec::new(),
        });
    }

    // extrema = turning points of the sign runs
    let mut extrema = Vec::new();
    let mut last_sign = 0i8;
    for (i, &s) in signs.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if last_sign != 0 && s != last_sign {
            extrema.push(w[i]);
        }
        last_sign = s;
    }
    let amps: Vec<f64> = extrema.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    if amps.len() < 2 {
        return Ok(TraceClassification {
            class: TraceClass::NonOscillatoryDivergent,
            pseudo_period: None,
            extrema_amplitudes: amps,
        });
    }
    let noninc = amps.windows(2).all(|p| p[1] <= p[0] * (1.0 + tolerance));
    let nondec = amps.windows(2).all(|p| p[1] >= p[0] * (1.0 - tolerance));
    let first = amps[0];
    let last = *amps.last().unwrap();
    let class = if noninc && last <= first * (1.0 - tolerance) {
        TraceClass::DampedOscillation
    } else if nondec && last >= first * (1.0 + tolerance) {
        TraceClass::AmplifiedOscillation
    } else {
        TraceClass::NonOscillatoryDivergent
    };
    let pseudo_period = match class {
        TraceClass::DampedOscillation | TraceClass::AmplifiedOscillation => pseudo_period(w),
        _ => None,
    };
    Ok(TraceClassification {
        class,
        pseudo_period,
        extrema_amplitudes: amps,
    })
}

fn range(v: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (hi - lo).max(0.0)
}

/// Mean spacing between successive strict local maxima, or `None` when
/// fewer than two exist.
pub fn pseudo_period(values: &[f64]) -> Option<f64> {
    let maxima: Vec<usize> = (1..values.len().saturating_sub(1))
        .filter(|&i| values[i - 1] < values[i] && values[i] > values[i + 1])
        .collect();
    if maxima.len() < 2 {
        return None;
    }
    let total: usize = maxima.last().unwrap() - maxima.first().unwrap();
    Some(total as f64 / (maxima.len() - 1) as f64)
}

/// Ratio curve |H^{n+1}_nu / H^{n+1}_{nu_conv}| of one converged component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub n: u32,
    pub nu_conv: u32,
    /// One entry per recorded snapshot with nu <= nu_conv; `None` where the
    /// converged value vanishes.
    pub ratios: Vec<Option<f64>>,
}

/// Ratio curves for every component with a recorded nu_conv.
pub fn ratio_curves(trace: &IterationTrace) -> Vec<RatioCurve> {
    let mut out = Vec::new();
    for n in trace.levels() {
        let Some(nu_conv) = trace.nu_conv_at(n) else {
            continue;
        };
        let reference = trace
            .snapshots
            .last()
            .map(|s| s.h.component(n))
            .unwrap_or(f64::NAN);
        let ratios = trace
            .snapshots
            .iter()
            .filter(|s| s.nu <= nu_conv)
            .map(|s| {
                if reference == 0.0 || !reference.is_finite() {
                    None
                } else {
                    Some((s.h.component(n) / reference).abs())
                }
            })
            .collect();
        out.push(RatioCurve {
            n,
            nu_conv,
            ratios,
        });
    }
    out
}

/// Summary of one (lambda, n_max) cell of a stability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScanOutcome {
    Run {
        status: RunStatus,
        /// Majority trace class over components n >= 5 (severity breaks ties).
        classification: TraceClass,
        max_nu_conv: Option<u32>,
        max_delta_conv: Option<f64>,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub lambda: f64,
    pub n_max: u32,
    pub outcome: ScanOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub cells: Vec<ScanCell>,
}

impl ScanGrid {
    /// Smallest n_max with a non-converged outcome, per lambda, in the
    /// lambda order of the scan. `None` means every cell converged.
    pub fn instability_thresholds(&self) -> Vec<(f64, Option<u32>)> {
        let mut lambdas = Vec::new();
        for c in &self.cells {
            if !lambdas.contains(&c.lambda) {
                lambdas.push(c.lambda);
            }
        }
        lambdas
            .into_iter()
            .map(|lam| {
                let th = self
                    .cells
                    .iter()
                    .filter(|c| c.lambda == lam)
                    .filter(|c| {
                        !matches!(
                            c.outcome,
                            ScanOutcome::Run {
                                status: RunStatus::Converged,
                                ..
                            }
                        )
                    })
                    .map(|c| c.n_max)
                    .min();
                (lam, th)
            })
            .collect()
    }
}

/// Majority class over the delta traces of components n >= 5; ties go to
/// the more severe class.
pub fn summarize_classes(trace: &IterationTrace, tolerance: f64) -> TraceClass {
    let mut counts = [0usize; 4];
    for n in trace.levels().filter(|&n| n >= 5) {
        let t: Vec<f64> = trace.delta_trace(n).into_iter().flatten().collect();
        if let Ok(c) = classify_trace(&t, tolerance) {
            counts[c.class as usize] += 1;
        }
    }
    let classes = [
        TraceClass::Monotone,
        TraceClass::DampedOscillation,
        TraceClass::AmplifiedOscillation,
        TraceClass::NonOscillatoryDivergent,
    ];
    let mut best = TraceClass::Monotone;
    let mut best_count = 0usize;
    for c in classes {
        // >= prefers the later (more severe) class on ties
        if counts[c as usize] >= best_count {
            best = c;
            best_count = counts[c as usize];
        }
    }
    best
}

/// One solver run per (lambda, n_max) cell; failures are recorded in-grid.
pub fn stability_scan(lambdas: &[f64], n_maxes: &[u32], base: &SolverConfig) -> ScanGrid {
    let mut cells = Vec::with_capacity(lambdas.len() * n_maxes.len());
    for &lam in lambdas {
        for &nm in n_maxes {
            let outcome = (|| -> Result<ScanOutcome> {
                let mut cfg = base.clone();
                cfg.lambda = Coupling::new(lam)?;
                cfg.n_max = nm;
                let (res, trace) = run(&cfg)?;
                Ok(ScanOutcome::Run {
                    status: res.status,
                    classification: summarize_classes(&trace, 0.05),
                    max_nu_conv: res.max_nu_conv(),
                    max_delta_conv: res.delta_conv.max_value(),
                })
            })();
            cells.push(ScanCell {
                lambda: lam,
                n_max: nm,
                outcome: outcome.unwrap_or_else(|e| ScanOutcome::Failed(e.to_string())),
            });
        }
    }
    ScanGrid { cells }
}

/// Outcome of the upward sign recursion for one (H^2, lambda) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SignMapResult {
    /// Alternating signs hold through n_max.
    Valid,
    /// First level whose component has the wrong sign.
    Violation { n: u32 },
    /// A component came out exactly zero (boundary of the map).
    ZeroComponent { n: u32 },
    /// The recursion left the binary64 range.
    NonFinite { n: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignMapCell {
    pub lambda: f64,
    pub h2: f64,
    pub result: SignMapResult,
}

/// Start from a given H^2, solve each level's equation for the next-higher
/// component, H^{n+3} = (H^{n+1} - B^{n+1} - C^{n+1}) / (-lambda), and record
/// where the alternating-sign pattern first fails.
pub fn sign_map(lambda_grid: &[f64], h2_grid: &[f64], n_max: u32) -> Result<Vec<SignMapCell>> {
    crate::model::check_n_max(n_max)?;
    for &lam in lambda_grid {
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sign map requires positive lambda, got {lam}"
            )));
        }
    }
    if lambda_grid.is_empty() || h2_grid.is_empty() {
        return Err(Error::InvalidConfig("sign map grids must be nonempty".into()));
    }
    let len = ((n_max + 1) / 2) as usize;
    let mut cells = Vec::with_capacity(lambda_grid.len() * h2_grid.len());
    for &lam in lambda_grid {
        for &h2 in h2_grid {
            cells.push(SignMapCell {
                lambda: lam,
                h2,
                result: sign_map_cell(lam, h2, n_max, len),
            });
        }
    }
    Ok(cells)
}

fn sign_map_cell(lam: f64, h2: f64, n_max: u32, len: usize) -> SignMapResult {
    let mut values = vec![0.0f64; len];
    values[0] = h2;
    let check = |n: u32, v: f64| -> Option<SignMapResult> {
        if !v.is_finite() {
            Some(SignMapResult::NonFinite { n })
        } else if v == 0.0 {
            Some(SignMapResult::ZeroComponent { n })
        } else if v.signum() != expected_sign(n) {
            Some(SignMapResult::Violation { n })
        } else {
            None
        }
    };
    if let Some(r) = check(1, h2) {
        return r;
    }
    // Eq. for the first level inverted: H^4 = (1 - H^2)/lambda
    values[1] = (1.0 - h2) / lam;
    if let Some(r) = check(3, values[1]) {
        return r;
    }
    let mut n = 3u32;
    while n + 2 <= n_max {
        let b = sum_b(&values, n, lam).unwrap_or(f64::NAN);
        let c = sum_c(&values, n, lam).unwrap_or(f64::NAN);
        let next = (values[level_index(n)] - b - c) / (-lam);
        values[level_index(n + 2)] = next;
        if let Some(r) = check(n + 2, next) {
            return r;
        }
        n += 2;
    }
    SignMapResult::Valid
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return None;
    }
    Some(num / (dx * dy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}
