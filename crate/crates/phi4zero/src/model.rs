//! Truncated Green's-function sequences and the equations of motion.
//!
//! A sequence holds one real component H^{n+1} per odd level n in
//! [1, n_max]. Level n couples to its neighbours through three terms:
//!
//! * A = -lambda * H^{n+3}                       (next-higher component)
//! * B = -3 lambda * sum over pair partitions    (pairwise products)
//! * C = -6 lambda * sum over triple partitions  (triple products)
//!
//! and the first level closes the system through H^2 = 1 - lambda H^4.
//! The component above the truncation (read by A at n = n_max) is supplied
//! by a [`ClosureMode`].

use serde::{Deserialize, Serialize};

use crate::combinatorics::{ln_factorial, pair_partitions, triple_partitions};
use crate::error::{Error, Result};

/// Dimensionless coupling constant, strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coupling(f64);

impl Coupling {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Coupling(lambda))
        } else {
            Err(Error::InvalidConfig(format!(
                "coupling must be positive and finite, got {lambda}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rule supplying the out-of-range component H^{n_max+3} at the top level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosureMode {
    /// Out-of-range components read as zero.
    #[default]
    Zero,
    /// Out-of-range components read from the fundamental sequence.
    Fundamental,
}

pub(crate) fn check_n_max(n_max: u32) -> Result<()> {
    if n_max < 5 || n_max % 2 == 0 {
        return Err(Error::InvalidNMax(n_max));
    }
    Ok(())
}

#[inline]
pub(crate) fn level_index(n: u32) -> usize {
    debug_assert!(n % 2 == 1);
    ((n - 1) / 2) as usize
}

/// Truncated sequence H = {H^{n+1}}, one component per odd n in [1, n_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSequence {
    n_max: u32,
    values: Vec<f64>,
}

impl GreenSequence {
    /// Build from components ordered by level (n = 1, 3, ..., n_max).
    /// All values must be finite.
    pub fn new(n_max: u32, values: Vec<f64>) -> Result<Self> {
        check_n_max(n_max)?;
        if values.len() != ((n_max + 1) / 2) as usize {
            return Err(Error::InvalidConfig(format!(
                "expected {} components for n_max={n_max}, got {}",
                (n_max + 1) / 2,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "component",
                n: 2 * k as u32 + 1,
            });
        }
        Ok(GreenSequence { n_max, values })
    }

    /// Internal constructor that tolerates non-finite entries; used by the
    /// mapping when a sweep is divergence-flagged.
    pub(crate) fn from_raw(n_max: u32, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), ((n_max + 1) / 2) as usize);
        GreenSequence { n_max, values }
    }

    #[inline]
    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Number of components, (n_max + 1) / 2.
    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Component H^{n+1} at odd level n. Panics on an invalid level.
    #[inline]
    pub fn component(&self, n: u32) -> f64 {
        assert!(n % 2 == 1 && n <= self.n_max, "invalid level {n}");
        self.values[level_index(n)]
    }

    pub fn get(&self, n: u32) -> Option<f64> {
        if n % 2 == 1 && n <= self.n_max {
            Some(self.values[level_index(n)])
        } else {
            None
        }
    }

    /// Odd levels 1, 3, ..., n_max.
    pub fn levels(&self) -> impl Iterator<Item = u32> {
        (1..=self.n_max).step_by(2)
    }

    /// (level, component) pairs in ascending level order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (2 * k as u32 + 1, v))
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// The delta_n values associated to a sequence. Entries are `None` where a
/// degenerate division (vanishing H^2, C^{n+1} or denominator) left the
/// value undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingSequence {
    n_max: u32,
    values: Vec<Option<f64>>,
}

impl SplittingSequence {
    pub fn new(n_max: u32, values: Vec<Option<f64>>) -> Result<Self> {
        check_n_max(n_max)?;
        if values.len() != ((n_max + 1) / 2) as usize {
            return Err(Error::InvalidConfig(format!(
                "expected {} splitting values for n_max={n_max}, got {}",
                (n_max + 1) / 2,
                values.len()
            )));
        }
        Ok(SplittingSequence { n_max, values })
    }

    pub(crate) fn from_raw(n_max: u32, values: Vec<Option<f64>>) -> Self {
        debug_assert_eq!(values.len(), ((n_max + 1) / 2) as usize);
        SplittingSequence { n_max, values }
    }

    #[inline]
    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// delta_n at odd level n, `None` if undefined or out of range.
    pub fn get(&self, n: u32) -> Option<f64> {
        if n % 2 == 1 && n <= self.n_max {
            self.values[level_index(n)]
        } else {
            None
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Option<f64>)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (2 * k as u32 + 1, v))
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Largest defined value, if any.
    pub fn max_value(&self) -> Option<f64> {
        self.values.iter().flatten().copied().fold(None, |acc, v| {
            Some(match acc {
                Some(a) if a >= v => a,
                _ => v,
            })
        })
    }
}

/// The three equation-of-motion terms at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Universal constant of the factorial growth bound |H^{n+1}| <= n! k0^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub k0: f64,
}

impl BoundConfig {
    pub fn new(k0: f64) -> Result<Self> {
        if k0 > 0.0 && k0.is_finite() {
            Ok(BoundConfig { k0 })
        } else {
            Err(Error::InvalidConfig(format!("k0 must be positive, got {k0}")))
        }
    }
}

// ---------------------------------------------------------------------------
// Term sums on raw component slices (shared with the mapping's in-place
// sweep and the fundamental-sequence construction).
// ---------------------------------------------------------------------------

/// B-sum over pair partitions; `values[k]` holds level 2k+1. The level-n
/// summand is weight * H^{j2+2} * H^{j1+1} = weight * values[(j2+1-1)/2] * values[(j1-1)/2].
pub(crate) fn sum_b(values: &[f64], n: u32, lambda: f64) -> Result<f64> {
    let mut s = 0.0;
    for p in pair_partitions(n)?.iter() {
        s += p.weight * values[level_index(p.j2 + 1)] * values[level_index(p.j1)];
    }
    Ok(-3.0 * lambda * s)
}

pub(crate) fn sum_c(values: &[f64], n: u32, lambda: f64) -> Result<f64> {
    let mut s = 0.0;
    for t in triple_partitions(n)?.iter() {
        s += t.weight
            * values[level_index(t.parts[0])]
            * values[level_index(t.parts[1])]
            * values[level_index(t.parts[2])];
    }
    Ok(-6.0 * lambda * s)
}

/// Value the closure supplies for the component at level n_max + 2
/// (upper index n_max + 3).
pub fn closure_value(mode: ClosureMode, lambda: Coupling, n_max: u32) -> Result<f64> {
    match mode {
        ClosureMode::Zero => Ok(0.0),
        ClosureMode::Fundamental => {
            let (h0, _) = fundamental_sequence(lambda, n_max + 2)?;
            Ok(h0.component(n_max + 2))
        }
    }
}

fn check_term_level(n: u32, n_max: u32) -> Result<()> {
    if n < 3 || n % 2 == 0 || n > n_max {
        return Err(Error::InvalidLevel(n));
    }
    Ok(())
}

/// A^{n+1} = -lambda H^{n+3}; the component above the truncation is taken
/// from `closure`.
pub fn term_a(h: &GreenSequence, n: u32, lambda: Coupling, closure: ClosureMode) -> Result<f64> {
    check_term_level(n, h.n_max())?;
    let upper = if n + 2 <= h.n_max() {
        h.component(n + 2)
    } else {
        closure_value(closure, lambda, h.n_max())?
    };
    Ok(-lambda.value() * upper)
}

/// B^{n+1} = -3 lambda * sum of weight * H^{j2+2} H^{j1+1} in enumeration order.
pub fn term_b(h: &GreenSequence, n: u32, lambda: Coupling) -> Result<f64> {
    check_term_level(n, h.n_max())?;
    let b = sum_b(h.values(), n, lambda.value())?;
    if !b.is_finite() {
        return Err(Error::NonFinite { what: "term B", n });
    }
    Ok(b)
}

/// C^{n+1} = -6 lambda * sum of weight * prod H^{i_l+1} in enumeration order.
pub fn term_c(h: &GreenSequence, n: u32, lambda: Coupling) -> Result<f64> {
    check_term_level(n, h.n_max())?;
    let c = sum_c(h.values(), n, lambda.value())?;
    if !c.is_finite() {
        return Err(Error::NonFinite { what: "term C", n });
    }
    Ok(c)
}

/// All three terms at one level.
pub fn eom_terms(
    h: &GreenSequence,
    n: u32,
    lambda: Coupling,
    closure: ClosureMode,
) -> Result<TermBreakdown> {
    Ok(TermBreakdown {
        a: term_a(h, n, lambda, closure)?,
        b: term_b(h, n, lambda)?,
        c: term_c(h, n, lambda)?,
    })
}

/// Residual of the equations of motion at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub n: u32,
    /// H^{n+1} - (A + B + C), or H^2 - (1 - lambda H^4) at n = 1.
    pub raw: f64,
    /// raw / max(|H^{n+1}|, 1)
    pub relative: f64,
    /// Whether the level's equation reads only in-range components.
    pub exact_closure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    /// Largest |relative| over all levels.
    pub fn max_relative(&self) -> f64 {
        self.entries.iter().map(|e| e.relative.abs()).fold(0.0, f64::max)
    }

    /// Largest |relative| over levels whose closure is exact.
    pub fn max_relative_exact(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.exact_closure)
            .map(|e| e.relative.abs())
            .fold(0.0, f64::max)
    }
}

/// Per-level residuals r_1 = H^2 - (1 - lambda H^4) and
/// r_n = H^{n+1} - (A + B + C), both raw and relative.
pub fn eom_residual(h: &GreenSequence, lambda: Coupling, closure: ClosureMode) -> ResidualReport {
    let lam = lambda.value();
    let mut entries = Vec::with_capacity(h.len());
    let r1 = h.component(1) - (1.0 - lam * h.component(3));
    entries.push(ResidualEntry {
        n: 1,
        raw: r1,
        relative: r1 / h.component(1).abs().max(1.0),
        exact_closure: true,
    });
    let closure_val = closure_value(closure, lambda, h.n_max()).unwrap_or(f64::NAN);
    let mut n = 3;
    while n <= h.n_max() {
        let upper = if n + 2 <= h.n_max() {
            h.component(n + 2)
        } else {
            closure_val
        };
        let a = -lam * upper;
        let b = sum_b(h.values(), n, lam).unwrap_or(f64::NAN);
        let c = sum_c(h.values(), n, lam).unwrap_or(f64::NAN);
        let raw = h.component(n) - (a + b + c);
        entries.push(ResidualEntry {
            n,
            raw,
            relative: raw / h.component(n).abs().max(1.0),
            exact_closure: n + 2 <= h.n_max(),
        });
        n += 2;
    }
    ResidualReport { entries }
}

/// Splitting values of the explicit starting point: delta_1 = delta_3 = 6 lambda
/// and delta_{n,0} = 3 lambda n(n-1) / (1 + 0.5 lambda n(n-1)) for n >= 5.
pub fn fundamental_splitting(lambda: Coupling, n_max: u32) -> Result<SplittingSequence> {
    check_n_max(n_max)?;
    let lam = lambda.value();
    let mut values = Vec::with_capacity(((n_max + 1) / 2) as usize);
    values.push(Some(6.0 * lam));
    values.push(Some(6.0 * lam));
    let mut n = 5u32;
    while n <= n_max {
        let k = 3.0 * lam * (n as f64) * (n as f64 - 1.0);
        values.push(Some(k / (1.0 + k / 6.0)));
        n += 2;
    }
    Ok(SplittingSequence { n_max, values })
}

/// Build the sequence determined by a splitting sequence: H^2 = 1 + lambda delta_1,
/// H^4 = -delta_3 (H^2)^3, and H^{n+1} = delta_n C^{n+1} / (3 lambda n(n-1))
/// upward, with C evaluated on the already-built lower components. Undefined
/// delta entries are treated as an invalid input.
pub fn sequence_from_splitting(
    delta: &SplittingSequence,
    lambda: Coupling,
) -> Result<GreenSequence> {
    let lam = lambda.value();
    let n_max = delta.n_max();
    let need = |n: u32| -> Result<f64> {
        delta.get(n).ok_or(Error::Degenerate {
            n,
            reason: "undefined splitting value",
        })
    };
    let mut values = vec![0.0f64; ((n_max + 1) / 2) as usize];
    values[0] = 1.0 + lam * need(1)?;
    values[1] = -need(3)? * values[0].powi(3);
    let mut n = 5u32;
    while n <= n_max {
        let c = sum_c(&values, n, lam)?;
        let k = 3.0 * lam * (n as f64) * (n as f64 - 1.0);
        values[level_index(n)] = need(n)? * c / k;
        n += 2;
    }
    GreenSequence::new(n_max, values)
}

/// The fundamental sequence H_0 and its splitting values.
pub fn fundamental_sequence(
    lambda: Coupling,
    n_max: u32,
) -> Result<(GreenSequence, SplittingSequence)> {
    let delta = fundamental_splitting(lambda, n_max)?;
    let h = sequence_from_splitting(&delta, lambda)?;
    Ok((h, delta))
}

/// Expected sign of a nonzero component: +1 for n = 1 mod 4, -1 for n = 3 mod 4.
#[inline]
pub fn expected_sign(n: u32) -> f64 {
    if n % 4 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Outcome of the alternating-sign check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub pass: bool,
    /// First level whose nonzero component has the wrong sign.
    pub first_violation: Option<u32>,
    /// Levels with exactly zero components (reported separately).
    pub zero_levels: Vec<u32>,
    /// Every component is zero.
    pub all_zero: bool,
}

/// Check the alternating-sign pattern H^2 > 0, H^4 < 0, H^6 > 0, ...
/// on all nonzero components.
pub fn check_signs(h: &GreenSequence) -> SignReport {
    let mut first_violation = None;
    let mut zero_levels = Vec::new();
    for (n, v) in h.iter() {
        if v == 0.0 {
            zero_levels.push(n);
        } else if v.signum() != expected_sign(n) && first_violation.is_none() {
            first_violation = Some(n);
        }
    }
    let all_zero = zero_levels.len() == h.len();
    SignReport {
        pass: first_violation.is_none(),
        first_violation,
        zero_levels,
        all_zero,
    }
}

/// Invert the splitting relations on a sequence:
/// delta_1 = (H^2 - 1)/lambda, delta_3 = -H^4/(H^2)^3,
/// delta_n = 3 lambda n(n-1) H^{n+1} / C^{n+1} for n >= 5.
/// Vanishing divisors mark the entry undefined instead of aborting.
pub fn extract_splitting(h: &GreenSequence, lambda: Coupling) -> SplittingSequence {
    let lam = lambda.value();
    let h2 = h.component(1);
    let mut values = Vec::with_capacity(h.len());
    values.push(Some((h2 - 1.0) / lam).filter(|v| v.is_finite()));
    let d3 = if h2 == 0.0 {
        None
    } else {
        Some(-h.component(3) / h2.powi(3)).filter(|v| v.is_finite())
    };
    values.push(d3);
    let mut n = 5u32;
    while n <= h.n_max() {
        let c = sum_c(h.values(), n, lam).unwrap_or(f64::NAN);
        let d = if c == 0.0 || !c.is_finite() {
            None
        } else {
            let k = 3.0 * lam * (n as f64) * (n as f64 - 1.0);
            Some(k * h.component(n) / c).filter(|v| v.is_finite())
        };
        values.push(d);
        n += 2;
    }
    SplittingSequence {
        n_max: h.n_max(),
        values,
    }
}

/// Outcome of the factorial growth-bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub pass: bool,
    pub first_violation: Option<u32>,
}

/// Check |H^{n+1}| <= n! k0^n for every component; the bound is evaluated
/// in log space.
pub fn bound_check(h: &GreenSequence, cfg: &BoundConfig) -> BoundReport {
    let ln_k0 = cfg.k0.ln();
    let mut first_violation = None;
    for (n, v) in h.iter() {
        if v == 0.0 {
            continue;
        }
        let ln_bound = ln_factorial(n) + n as f64 * ln_k0;
        if v.abs().ln() > ln_bound {
            first_violation = Some(n);
            break;
        }
    }
    BoundReport {
        pass: first_violation.is_none(),
        first_violation,
    }
}
