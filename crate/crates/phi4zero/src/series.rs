//! Independent order-by-order solution of the raw equations of motion as
//! truncated power series in the coupling.
//!
//! Every right-hand side of the system carries an explicit factor of the
//! coupling, so iterating the raw equations in truncated series arithmetic
//! fixes all coefficients through order k after k iterations. The result is
//! the unique formal solution through the requested order, computed without
//! any of the interpretation choices made by the update mapping; it serves
//! as convention-free ground truth for small couplings.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{pair_partitions, triple_partitions};
use crate::error::{Error, Result};
use crate::model::{check_n_max, level_index, Coupling, GreenSequence};
use crate::solver::{RunResult, RunStatus};

/// Truncated formal power series in the coupling; `coeffs[p]` is the
/// coefficient of the p-th power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn zero(order: usize) -> Self {
        PowerSeries {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn constant(c: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = c;
        s
    }

    /// Truncation order (highest retained power).
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, p: usize) -> f64 {
        self.coeffs.get(p).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn add_scaled(&mut self, other: &PowerSeries, factor: f64) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    /// Truncated product.
    fn mul(&self, other: &PowerSeries) -> PowerSeries {
        let order = self.order();
        let mut out = PowerSeries::zero(order);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for j in 0..=order - i {
                out.coeffs[i + j] += a * other.coeffs[j];
            }
        }
        out
    }

    /// Multiply by one power of the coupling (shift coefficients up).
    fn shift_up(&self) -> PowerSeries {
        let mut out = PowerSeries::zero(self.order());
        for p in 1..=self.order() {
            out.coeffs[p] = self.coeffs[p - 1];
        }
        out
    }
}

/// Horner evaluation of the truncated polynomial.
pub fn series_eval(series: &PowerSeries, lambda: Coupling) -> f64 {
    let lam = lambda.value();
    series.coeffs.iter().rev().fold(0.0, |acc, &c| acc * lam + c)
}

/// Formal solution of the truncated system through the given order, one
/// series per level, zero closure at the top. Starting from H^2 = 1 and
/// zero elsewhere, iteration k fixes all coefficients through order k;
/// the loop runs exactly `order` iterations.
pub fn series_solve(n_max: u32, order: usize) -> Result<Vec<(u32, PowerSeries)>> {
    check_n_max(n_max)?;
    if order < 1 {
        return Err(Error::InvalidConfig(format!(
            "series order must be >= 1, got {order}"
        )));
    }
    let len = ((n_max + 1) / 2) as usize;
    let mut state: Vec<PowerSeries> = vec![PowerSeries::zero(order); len];
    state[0] = PowerSeries::constant(1.0, order);

    for _ in 0..order {
        let mut next: Vec<PowerSeries> = Vec::with_capacity(len);
        // H^2 = 1 - lambda H^4
        let mut h2 = PowerSeries::constant(1.0, order);
        h2.add_scaled(&state[1].shift_up(), -1.0);
        next.push(h2);
        let mut n = 3u32;
        while n <= n_max {
            let mut acc = PowerSeries::zero(order);
            // A = -lambda H^{n+3}, zero beyond the truncation
            if n + 2 <= n_max {
                acc.add_scaled(&state[level_index(n + 2)].shift_up(), -1.0);
            }
            // B = -3 lambda sum w H^{j2+2} H^{j1+1}
            let mut bsum = PowerSeries::zero(order);
            for p in pair_partitions(n)?.iter() {
                let prod = state[level_index(p.j2 + 1)].mul(&state[level_index(p.j1)]);
                bsum.add_scaled(&prod, p.weight);
            }
            acc.add_scaled(&bsum.shift_up(), -3.0);
            // C = -6 lambda sum w H^{i1+1} H^{i2+1} H^{i3+1}
            let mut csum = PowerSeries::zero(order);
            for t in triple_partitions(n)?.iter() {
                let prod = state[level_index(t.parts[0])]
                    .mul(&state[level_index(t.parts[1])])
                    .mul(&state[level_index(t.parts[2])]);
                csum.add_scaled(&prod, t.weight);
            }
            acc.add_scaled(&csum.shift_up(), -6.0);
            next.push(acc);
            n += 2;
        }
        state = next;
    }

    Ok(state
        .into_iter()
        .enumerate()
        .map(|(k, s)| (2 * k as u32 + 1, s))
        .collect())
}

/// Per-component deviation between a converged solver result and the
/// series evaluated at the same coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDeviation {
    pub n: u32,
    pub solver: f64,
    pub series: f64,
    /// |solver - series| / max(|series|, 1)
    pub relative: f64,
}

/// Compare a converged result against the series oracle, restricted to the
/// components whose truncation closure is exact (their own equation reads
/// only in-range components).
pub fn oracle_compare(
    result: &RunResult,
    order: usize,
    lambda: Coupling,
) -> Result<Vec<OracleDeviation>> {
    if result.status != RunStatus::Converged {
        return Err(Error::NotConverged(result.status.as_str()));
    }
    let n_max = result.n_max();
    let series = series_solve(n_max, order)?;
    let mut out = Vec::new();
    for (n, s) in &series {
        let exact = *n == 1 || n + 2 <= n_max;
        if !exact {
            continue;
        }
        let sv = series_eval(s, lambda);
        let hv = result.h_conv.component(*n);
        out.push(OracleDeviation {
            n: *n,
            solver: hv,
            series: sv,
            relative: (hv - sv).abs() / sv.abs().max(1.0),
        });
    }
    Ok(out)
}

/// Evaluate every series at a coupling and assemble a sequence (used to
/// extract splitting values from the oracle).
pub fn series_sequence(series: &[(u32, PowerSeries)], lambda: Coupling) -> Result<GreenSequence> {
    let n_max = series.last().map(|(n, _)| *n).unwrap_or(0);
    let values: Vec<f64> = series.iter().map(|(_, s)| series_eval(s, lambda)).collect();
    GreenSequence::new(n_max, values)
}
