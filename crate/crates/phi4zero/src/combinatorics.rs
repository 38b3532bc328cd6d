//! Odd-part decompositions of a level index and their multinomial weights.
//!
//! The pairwise term of the equations of motion sums over pairs
//! (j1 odd >= 1, j2 even >= 2) with j1 + j2 = n, weighted by n!/(j1! j2!).
//! The triple term sums over unordered triples of odd positive parts of n,
//! weighted by n!/(i1! i2! i3! sigma_sym) where sigma_sym is the product of
//! the factorials of the part multiplicities. Weights are accumulated in log
//! space and exponentiated so that levels up to n = 121 stay inside binary64
//! range; the unit tests check them against exact big-integer arithmetic.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One summand of the pairwise term: j1 odd, j2 even, j1 + j2 = n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPartition {
    pub j1: u32,
    pub j2: u32,
    /// n! / (j1! j2!)
    pub weight: f64,
}

/// One summand of the triple term: an unordered triple of odd parts of n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriplePartition {
    /// Parts in ascending order.
    pub parts: [u32; 3],
    /// Product of factorials of the part multiplicities: 6, 2 or 1.
    pub sigma_sym: u32,
    /// n! / (i1! i2! i3! sigma_sym)
    pub weight: f64,
}

const LN_FACT_TABLE: usize = 256;

fn ln_factorial_table() -> &'static [f64; LN_FACT_TABLE] {
    static TABLE: OnceLock<[f64; LN_FACT_TABLE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0f64; LN_FACT_TABLE];
        // Kahan-compensated running sum of ln k.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for k in 1..LN_FACT_TABLE {
            let term = (k as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            t[k] = sum;
        }
        t
    })
}

/// ln(k!) from the precomputed table, extended by direct accumulation for
/// arguments past the table end.
pub fn ln_factorial(k: u32) -> f64 {
    let table = ln_factorial_table();
    if (k as usize) < LN_FACT_TABLE {
        table[k as usize]
    } else {
        let mut sum = table[LN_FACT_TABLE - 1];
        for j in LN_FACT_TABLE as u32..=k {
            sum += (j as f64).ln();
        }
        sum
    }
}

/// Product of factorials of the multiplicities of a 3-part multiset:
/// 6 if all parts are equal, 2 if exactly two are, 1 otherwise.
pub fn symmetry_factor(parts: &[u32; 3]) -> u32 {
    let [a, b, c] = *parts;
    if a == b && b == c {
        6
    } else if a == b || b == c || a == c {
        2
    } else {
        1
    }
}

/// n! / (prod parts! * sigma), via log-gamma accumulation and one
/// exponentiation. Relative error stays below 1e-12 for n <= 121.
pub fn multinomial_weight(n: u32, parts: &[u32], sigma: u32) -> Result<f64> {
    debug_assert_eq!(parts.iter().sum::<u32>(), n, "parts must sum to n");
    debug_assert!(sigma >= 1);
    let mut ln = ln_factorial(n) - (sigma as f64).ln();
    for &p in parts {
        ln -= ln_factorial(p);
    }
    let w = ln.exp();
    if !w.is_finite() {
        return Err(Error::WeightOverflow { n });
    }
    Ok(w)
}

fn check_level(n: u32) -> Result<()> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidLevel(n));
    }
    Ok(())
}

fn build_pairs(n: u32) -> Result<Arc<[PairPartition]>> {
    check_level(n)?;
    let mut out = Vec::with_capacity(((n - 1) / 2) as usize);
    let mut j1 = 1;
    while j1 <= n - 2 {
        let j2 = n - j1;
        out.push(PairPartition {
            j1,
            j2,
            weight: multinomial_weight(n, &[j1, j2], 1)?,
        });
        j1 += 2;
    }
    Ok(out.into())
}

fn build_triples(n: u32) -> Result<Arc<[TriplePartition]>> {
    check_level(n)?;
    let mut out = Vec::new();
    let mut i1 = 1;
    while 3 * i1 <= n {
        let mut i2 = i1;
        while i1 + 2 * i2 <= n {
            let i3 = n - i1 - i2;
            // i3 is odd automatically: n odd, i1 + i2 even.
            debug_assert!(i3 % 2 == 1 && i3 >= i2);
            let parts = [i1, i2, i3];
            let sigma_sym = symmetry_factor(&parts);
            out.push(TriplePartition {
                parts,
                sigma_sym,
                weight: multinomial_weight(n, &parts, sigma_sym)?,
            });
            i2 += 2;
        }
        i1 += 2;
    }
    Ok(out.into())
}

type Memo<T> = RwLock<HashMap<u32, Arc<[T]>>>;

fn pair_memo() -> &'static Memo<PairPartition> {
    static MEMO: OnceLock<Memo<PairPartition>> = OnceLock::new();
    MEMO.get_or_init(|| RwLock::new(HashMap::new()))
}

fn triple_memo() -> &'static Memo<TriplePartition> {
    static MEMO: OnceLock<Memo<TriplePartition>> = OnceLock::new();
    MEMO.get_or_init(|| RwLock::new(HashMap::new()))
}

/// All pairs (j1 odd >= 1, j2 even >= 2) with j1 + j2 = n, ascending in j1.
/// Results are memoized per n; concurrent fills produce identical tables.
pub fn pair_partitions(n: u32) -> Result<Arc<[PairPartition]>> {
    if let Some(hit) = pair_memo().read().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    let built = build_pairs(n)?;
    let mut memo = pair_memo().write().unwrap();
    Ok(memo.entry(n).or_insert(built).clone())
}

/// All unordered triples of odd positive parts of n, each listed once in
/// ascending lexicographic order of the sorted parts. Memoized per n.
pub fn triple_partitions(n: u32) -> Result<Arc<[TriplePartition]>> {
    if let Some(hit) = triple_memo().read().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    let built = build_triples(n)?;
    let mut memo = triple_memo().write().unwrap();
    Ok(memo.entry(n).or_insert(built).clone())
}
