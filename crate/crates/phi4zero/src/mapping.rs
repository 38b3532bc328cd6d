//! One application of the update mapping on a truncated sequence.
//!
//! The sweep rebuilds the sequence level by level:
//!
//! * H^2'  = 1 + lambda delta_1'          with delta_1' = -H^4
//! * H^4'  = -delta_3' (H^2')^3           with delta_3' = 6 lambda / (1 + 6 lambda H^2 (3/2 - |H^6|/(6 |H^4| |H^2|)))
//! * H^{n+1}' = delta_n' C^{n+1}' / (3 lambda n(n-1))  for n >= 5,
//!   with delta_n' = 3 lambda n(n-1) / (1 + D_n) and D_n = (|B^{n+1}| - |A^{n+1}|)/|H^{n+1}|.
//!
//! In the upward order the sweep works in place on a single component array:
//! every read sees lower levels already updated this sweep and the level
//! itself plus higher levels still at their incoming values. The jacobi
//! order evaluates every right-hand side on the incoming sequence instead
//! (the explicit (H^2')^3 factor excepted) and is kept for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    closure_value, level_index, sum_b, sum_c, ClosureMode, Coupling, GreenSequence,
    SplittingSequence,
};

/// Level order of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    /// Upward in-place sweep; lower levels feed the current one as soon as
    /// they are updated.
    #[default]
    Upward,
    /// Simultaneous update from the incoming sequence only.
    Jacobi,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub order: SweepOrder,
    pub closure: ClosureMode,
}

/// Why a level was divergence-flagged during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagKind {
    /// |H^{n+1}| below 1e-300, or a vanishing H^2/H^4 in the delta_3' inputs.
    ZeroComponent,
    /// The delta denominator vanished or lost finiteness.
    VanishingDenominator,
    /// A term sum or the updated component left the binary64 range.
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelFlag {
    pub n: u32,
    pub kind: FlagKind,
}

/// Result of one sweep. When `flags` is nonempty the output is
/// divergence-flagged: affected components hold NaN and the caller decides
/// whether to abort.
#[derive(Debug, Clone, PartialEq)]
pub struct MStarOutput {
    pub h_next: GreenSequence,
    pub delta_next: SplittingSequence,
    /// D_n per level n >= 5, in level order; `None` where degenerate or frozen.
    pub d_values: Vec<(u32, Option<f64>)>,
    pub flags: Vec<LevelFlag>,
}

impl MStarOutput {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

/// delta_1' = -H^4.
pub fn delta1_prime(h: &GreenSequence) -> f64 {
    -h.component(3)
}

fn delta3_from_values(h2: f64, h4: f64, h6: f64, lambda: f64) -> Result<f64> {
    if h4 == 0.0 || h2 == 0.0 {
        return Err(Error::Degenerate {
            n: 3,
            reason: "vanishing H^2 or H^4 in delta_3'",
        });
    }
    let denom = 1.0 + 6.0 * lambda * h2 * (1.5 - h6.abs() / (6.0 * h4.abs() * h2.abs()));
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Degenerate {
            n: 3,
            reason: "vanishing delta_3' denominator",
        });
    }
    Ok(6.0 * lambda / denom)
}

/// delta_3' = 6 lambda [1 + 6 lambda H^2 (3/2 - |H^6| / (6 |H^4| |H^2|))]^{-1},
/// evaluated on the given sequence.
pub fn delta3_prime(h: &GreenSequence, lambda: Coupling) -> Result<f64> {
    delta3_from_values(h.component(1), h.component(3), h.component(5), lambda.value())
}

/// Threshold below which |H^{n+1}| is treated as a degenerate divisor in D_n.
pub const D_N_FLOOR: f64 = 1e-300;

fn d_n_from_values(values: &[f64], n: u32, n_max: u32, lambda: f64, closure_val: f64) -> Result<f64> {
    let k = level_index(n);
    let href = values[k];
    if href.abs() < D_N_FLOOR {
        return Err(Error::Degenerate {
            n,
            reason: "vanishing H^{n+1} in D_n",
        });
    }
    let upper = if n + 2 <= n_max {
        values[level_index(n + 2)]
    } else {
        closure_val
    };
    let a = -lambda * upper;
    let b = sum_b(values, n, lambda)?;
    let d = (b.abs() - a.abs()) / href.abs();
    if !d.is_finite() {
        return Err(Error::NonFinite { what: "D_n", n });
    }
    Ok(d)
}

/// D_n = (|B^{n+1}| - |A^{n+1}|) / |H^{n+1}|, evaluated on the given sequence.
pub fn d_n(h: &GreenSequence, n: u32, lambda: Coupling, closure: ClosureMode) -> Result<f64> {
    if n < 5 || n % 2 == 0 || n > h.n_max() {
        return Err(Error::InvalidLevel(n));
    }
    let cv = closure_value(closure, lambda, h.n_max())?;
    d_n_from_values(h.values(), n, h.n_max(), lambda.value(), cv)
}

/// One sweep with a freeze mask: frozen levels keep their incoming value and
/// are read by active levels as constants. `closure_val` is the component
/// the closure supplies above the truncation.
pub(crate) fn sweep(
    h: &GreenSequence,
    lambda: Coupling,
    cfg: SweepConfig,
    frozen: &[bool],
    closure_val: f64,
) -> MStarOutput {
    let lam = lambda.value();
    let n_max = h.n_max();
    let len = h.len();
    debug_assert_eq!(frozen.len(), len);

    let mut work = h.values().to_vec();
    let mut delta = vec![None; len];
    let mut d_values = Vec::with_capacity(len.saturating_sub(2));
    let mut flags = Vec::new();

    // In jacobi order every right-hand side reads the incoming sequence;
    // in upward order it reads the work array as it stands.
    let original = h.values().to_vec();
    let src = |work: &[f64]| -> Vec<f64> {
        match cfg.order {
            SweepOrder::Upward => work.to_vec(),
            SweepOrder::Jacobi => original.clone(),
        }
    };

    // level 1
    if !frozen[0] {
        let d1 = -work[1];
        work[0] = 1.0 + lam * d1;
        delta[0] = Some(d1);
    }

    // level 3: delta_3' reads H^2 as the sweep order dictates, the cube
    // factor always uses the updated H^2'.
    if !frozen[1] {
        let s = src(&work);
        match delta3_from_values(s[0], s[1], s[2], lam) {
            Ok(d3) => {
                let new = -d3 * work[0].powi(3);
                if new.is_finite() {
                    work[1] = new;
                    delta[1] = Some(d3);
                } else {
                    work[1] = f64::NAN;
                    flags.push(LevelFlag {
                        n: 3,
                        kind: FlagKind::NonFinite,
                    });
                }
            }
            Err(Error::Degenerate { .. }) => {
                work[1] = f64::NAN;
                flags.push(LevelFlag {
                    n: 3,
                    kind: FlagKind::ZeroComponent,
                });
            }
            Err(_) => {
                work[1] = f64::NAN;
                flags.push(LevelFlag {
                    n: 3,
                    kind: FlagKind::NonFinite,
                });
            }
        }
    }

    // levels n >= 5 upward
    let mut n = 5u32;
    while n <= n_max {
        let k = level_index(n);
        if frozen[k] {
            d_values.push((n, None));
            n += 2;
            continue;
        }
        let s = src(&work);
        let kn = 3.0 * lam * (n as f64) * (n as f64 - 1.0);
        match d_n_from_values(&s, n, n_max, lam, closure_val) {
            Ok(dn) => {
                let denom = 1.0 + dn;
                let dnp = kn / denom;
                // C' always reads the updated lower levels in upward order.
                let c_src = match cfg.order {
                    SweepOrder::Upward => &work,
                    SweepOrder::Jacobi => &original,
                };
                let c = sum_c(c_src, n, lam).unwrap_or(f64::NAN);
                let new = dnp * c / kn;
                d_values.push((n, Some(dn)));
                if denom == 0.0 || !dnp.is_finite() {
                    work[k] = f64::NAN;
                    delta[k] = None;
                    flags.push(LevelFlag {
                        n,
                        kind: FlagKind::VanishingDenominator,
                    });
                } else if !new.is_finite() {
                    work[k] = f64::NAN;
                    delta[k] = Some(dnp).filter(|v| v.is_finite());
                    flags.push(LevelFlag {
                        n,
                        kind: FlagKind::NonFinite,
                    });
                } else {
                    work[k] = new;
                    delta[k] = Some(dnp);
                }
            }
            Err(Error::Degenerate { .. }) => {
                d_values.push((n, None));
                work[k] = f64::NAN;
                delta[k] = None;
                flags.push(LevelFlag {
                    n,
                    kind: FlagKind::ZeroComponent,
                });
            }
            Err(_) => {
                d_values.push((n, None));
                work[k] = f64::NAN;
                delta[k] = None;
                flags.push(LevelFlag {
                    n,
                    kind: FlagKind::NonFinite,
                });
            }
        }
        n += 2;
    }

    MStarOutput {
        h_next: GreenSequence::from_raw(n_max, work),
        delta_next: SplittingSequence::from_raw(n_max, delta),
        d_values,
        flags,
    }
}

/// Apply the mapping once to a sequence.
pub fn apply_mstar(h: &GreenSequence, lambda: Coupling, cfg: SweepConfig) -> Result<MStarOutput> {
    let cv = closure_value(cfg.closure, lambda, h.n_max())?;
    Ok(sweep(h, lambda, cfg, &vec![false; h.len()], cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fundamental_sequence;

    fn seq(n_max: u32, vals: &[f64]) -> GreenSequence {
        GreenSequence::new(n_max, vals.to_vec()).unwrap()
    }

    #[test]
    fn delta1_prime_examples() {
        let h = seq(5, &[1.0, -0.06, 0.0]);
        assert_eq!(delta1_prime(&h), 0.06);
        let h = seq(5, &[1.0, 0.0, 0.0]);
        assert_eq!(delta1_prime(&h), 0.0);
        let lam = Coupling::new(0.01).unwrap();
        let (h0, _) = fundamental_sequence(lam, 5).unwrap();
        assert!((delta1_prime(&h0) - 0.0601081).abs() < 1e-7);
    }

    #[test]
    fn delta3_prime_examples() {
        let lam = Coupling::new(0.01).unwrap();
        let h = seq(5, &[1.0, -0.06, 0.0]);
        let d3 = delta3_prime(&h, lam).unwrap();
        assert!((d3 - 0.06 / 1.09).abs() < 1e-12);
        assert!((d3 - 0.0550459).abs() < 1e-7);
        // small-coupling limit: delta_3'/lambda -> 6
        let lam = Coupling::new(1e-8).unwrap();
        let h = seq(5, &[1.0, -6e-8, 3.6e-14]);
        let d3 = delta3_prime(&h, lam).unwrap();
        assert!((d3 / 1e-8 - 6.0).abs() < 1e-5);
        // vanishing H^4 is degenerate
        let h = seq(5, &[1.0, 0.0, 0.1]);
        assert!(delta3_prime(&h, Coupling::new(0.01).unwrap()).is_err());
    }

    #[test]
    fn d_n_examples() {
        let lam = Coupling::new(0.01).unwrap();
        // B = 0.2, A = 0.1, H = 0.05 -> 2.0, built from a 3-level toy:
        // easier checked through arithmetic on a real sequence.
        let h = seq(7, &[1.0, -0.06, 0.05, 0.002]);
        let a = crate::model::term_a(&h, 5, lam, ClosureMode::Zero).unwrap();
        let b = crate::model::term_b(&h, 5, lam).unwrap();
        let d = d_n(&h, 5, lam, ClosureMode::Zero).unwrap();
        assert!((d - (b.abs() - a.abs()) / 0.05).abs() < 1e-15);
        // zero component is degenerate
        let h = seq(7, &[1.0, -0.06, 0.0, 0.002]);
        assert!(matches!(
            d_n(&h, 5, lam, ClosureMode::Zero),
            Err(Error::Degenerate { n: 5, .. })
        ));
    }

    #[test]
    fn d_n_zero_when_terms_cancel() {
        // |B| = |A| gives D_n = 0 and delta_n' = 3 lambda n (n-1).
        let lam = Coupling::new(0.01).unwrap();
        let h = seq(7, &[1.0, -0.06, 0.05, 0.002]);
        let b = crate::model::term_b(&h, 5, lam).unwrap();
        // choose the upper component so that |A| = |B|
        let mut vals = h.values().to_vec();
        vals[3] = -(b.abs() / 0.01);
        let h = seq(7, &vals);
        let d = d_n(&h, 5, lam, ClosureMode::Zero).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn apply_mstar_on_fundamental_level_one() {
        let lam = Coupling::new(0.01).unwrap();
        let (h0, _) = fundamental_sequence(lam, 9).unwrap();
        let out = apply_mstar(&h0, lam, SweepConfig::default()).unwrap();
        assert!(out.is_clean());
        let expect = 1.0 - 0.01 * h0.component(3);
        assert!((out.h_next.component(1) - expect).abs() < 1e-15);
        assert!((expect - 1.000601081).abs() < 1e-8);
    }

    #[test]
    fn c_prime_at_the_top_reads_the_updated_pair() {
        // At n = 5 the only triple partition is {1,1,3}; the sweep's C'
        // must match term_c on the freshly updated H^2', H^4'.
        let lam = Coupling::new(0.01).unwrap();
        let h = seq(5, &[1.0, -0.06, 0.03]);
        let out = apply_mstar(&h, lam, SweepConfig::default()).unwrap();
        assert!(out.is_clean());
        let updated = seq(5, &[
            out.h_next.component(1),
            out.h_next.component(3),
            0.0,
        ]);
        let c5 = crate::model::term_c(&updated, 5, lam).unwrap();
        let d5 = out.d_values.iter().find(|(n, _)| *n == 5).unwrap().1.unwrap();
        let expect = c5 / (1.0 + d5);
        assert!((out.h_next.component(5) - expect).abs() < 1e-15);
    }

    #[test]
    fn sweep_is_deterministic() {
        let lam = Coupling::new(0.02).unwrap();
        let (h0, _) = fundamental_sequence(lam, 21).unwrap();
        let a = apply_mstar(&h0, lam, SweepConfig::default()).unwrap();
        let b = apply_mstar(&h0, lam, SweepConfig::default()).unwrap();
        assert_eq!(a.h_next.values(), b.h_next.values());
        assert_eq!(a.delta_next.values(), b.delta_next.values());
    }

    #[test]
    fn degenerate_level_flags_and_nan_cascade() {
        let lam = Coupling::new(0.01).unwrap();
        let h = seq(7, &[1.0, -0.06, 0.0, 0.001]);
        let out = apply_mstar(&h, lam, SweepConfig::default()).unwrap();
        assert!(!out.is_clean());
        assert!(out
            .flags
            .iter()
            .any(|f| f.n == 5 && f.kind == FlagKind::ZeroComponent));
        assert!(out.h_next.component(5).is_nan());
        // C^8 reads level 5 -> NaN propagates to level 7
        assert!(out.h_next.component(7).is_nan());
    }

    #[test]
    fn frozen_levels_pass_through_exactly() {
        let lam = Coupling::new(0.01).unwrap();
        let (h0, _) = fundamental_sequence(lam, 9).unwrap();
        let mut frozen = vec![false; h0.len()];
        frozen[1] = true;
        let cv = closure_value(ClosureMode::Zero, lam, 9).unwrap();
        let out = sweep(&h0, lam, SweepConfig::default(), &frozen, cv);
        assert_eq!(out.h_next.component(3), h0.component(3));
        assert_eq!(out.delta_next.get(3), None);
    }

    #[test]
    fn jacobi_and_upward_agree_at_a_numerical_fixed_point() {
        // Both orders coincide on inputs whose components equal their images;
        // near a converged state they agree to the residual scale.
        let lam = Coupling::new(0.005).unwrap();
        let (mut h, _) = fundamental_sequence(lam, 15).unwrap();
        for _ in 0..200 {
            h = apply_mstar(&h, lam, SweepConfig::default()).unwrap().h_next;
        }
        let up = apply_mstar(&h, lam, SweepConfig::default()).unwrap();
        let ja = apply_mstar(
            &h,
            lam,
            SweepConfig {
                order: SweepOrder::Jacobi,
                closure: ClosureMode::Zero,
            },
        )
        .unwrap();
        for (n, v) in up.h_next.iter() {
            let w = ja.h_next.component(n);
            assert!(
                (v - w).abs() <= 1e-9 * v.abs().max(1e-30),
                "order mismatch at n={n}: {v} vs {w}"
            );
        }
    }
}
