//! Euler characteristics of `M` and of the signed singular strata, each by
//! Morse counting and (where the stratum is at most one-dimensional) by
//! direct point/arc/circle counting, and the global identities
//!
//! * signed sum: `chi(M) = sum over odd k of chi(A_k^+ closure) - chi(A_k^- closure)`;
//! * mod 2: `chi(M) = sum_k chi(A_k closure) (mod 2)`;
//! * fold-only: `chi(M) = chi(A_1^+) - chi(A_1^-)` when there are no cusps.

use serde::Serialize;

use crate::morse::{self, CriticalRecord, MorseData};
use crate::scenario::MorinScenario;
use crate::strata::{self, Sign, StrataAudit, Stratification};
use crate::{Error, Result, Tolerances};

fn alt(index: usize) -> i64 {
    if index.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `sum (-1)^index` over critical points of a Morse function on a closed
/// manifold.
pub fn chi_closed_morse(records: &[CriticalRecord]) -> i64 {
    records.iter().map(|r| alt(r.morse_index)).sum()
}

/// A critical point of the boundary restriction of a function on a manifold
/// with boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPoint {
    /// Correct point with its index on the boundary and whether the
    /// gradient points inwards.
    Correct { index: usize, inward: bool },
    /// Non-correct point after a local perturbation: it becomes correct with
    /// the given inwardness and may push an interior critical point of index
    /// `partner_index` into this piece.
    Perturbed {
        index: usize,
        inward: bool,
        partner_index: Option<usize>,
    },
    /// Neither classified correct nor certified.
    Unresolved,
}

/// `chi = sum over interior (-1)^index + sum over inward boundary (-1)^index`.
pub fn chi_with_boundary(interior: &[usize], boundary: &[BoundaryPoint]) -> Result<i64> {
    let mut chi: i64 = interior.iter().map(|&i| alt(i)).sum();
    for (k, b) in boundary.iter().enumerate() {
        match *b {
            BoundaryPoint::Correct { index, inward } => {
                if inward {
                    chi += alt(index);
                }
            }
            BoundaryPoint::Perturbed {
                index,
                inward,
                partner_index,
            } => {
                if inward {
                    chi += alt(index);
                }
                if let Some(p) = partner_index {
                    chi += alt(p);
                }
            }
            BoundaryPoint::Unresolved => {
                return Err(Error::Numerical(format!(
                    "boundary critical point {k} is neither correct nor certified"
                )))
            }
        }
    }
    Ok(chi)
}

/// One signed stratum closure.
#[derive(Clone, Debug, Serialize)]
pub struct StratumChi {
    pub k: usize,
    pub sign: Sign,
    pub dimension: usize,
    /// Morse route: open-stratum sum plus inward boundary contributions.
    pub chi_morse: i64,
    /// `sum (-1)^index` over critical points in the open stratum.
    pub open_sum: i64,
    /// Contribution of (perturbed) boundary points and their partners.
    pub boundary_sum: i64,
    /// Direct count when the stratum has dimension at most one.
    pub chi_oracle: Option<i64>,
    pub arcs: usize,
    pub circles: usize,
    pub points: usize,
}

fn boundary_points(md: &MorseData, sign: Sign) -> Vec<BoundaryPoint> {
    let mut out: Vec<BoundaryPoint> = md
        .certificates
        .iter()
        .map(|c| BoundaryPoint::Perturbed {
            index: c.boundary_index,
            inward: matches!(
                (c.inward_into, sign),
                (morse::Inward::PlusStratum, Sign::Plus)
                    | (morse::Inward::MinusStratum, Sign::Minus)
            ),
            partner_index: (c.p_tilde_side == sign).then_some(c.p_tilde_index),
        })
        .collect();
    let certified = md.certificates.len();
    let cusp_records = md
        .on_singular_set
        .iter()
        .filter(|r| r.point_depth == 2)
        .count();
    out.extend(std::iter::repeat_n(
        BoundaryPoint::Unresolved,
        cusp_records.saturating_sub(certified),
    ));
    out
}

/// `chi` of the closure of `A_k^{sign}` from the critical data of `L_a o f`.
pub fn chi_stratum_via_morse(
    st: &Stratification,
    md: &MorseData,
    k: usize,
    sign: Sign,
) -> Result<(i64, i64, i64)> {
    if k != 1 {
        // deeper odd strata only exist for n >= 3, where cusps (and hence
        // everything below them) are rejected upstream
        return Ok((0, 0, 0));
    }
    let interior: Vec<usize> = md
        .on_singular_set
        .iter()
        .filter(|r| r.point_depth == 1 && r.sign == sign)
        .map(|r| r.morse_index)
        .collect();
    let open: i64 = interior.iter().map(|&i| alt(i)).sum();
    let boundary = if st.n == 2 {
        boundary_points(md, sign)
    } else {
        Vec::new()
    };
    let chi = chi_with_boundary(&interior, &boundary)?;
    Ok((chi, open, chi - open))
}

/// Direct `chi` of a signed closure of dimension 0 (point count) or 1 (one
/// per arc, zero per circle); `None` otherwise.
pub fn chi_stratum_oracle(st: &Stratification, k: usize, sign: Sign) -> Option<i64> {
    match st.n.checked_sub(k)? {
        0 => Some(st.count(k, sign) as i64),
        1 if k == 1 => Some(st.arcs.iter().filter(|a| a.sign == sign).count() as i64),
        _ => None,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

impl IdentityCheck {
    fn new(lhs: i64, rhs: i64) -> Self {
        IdentityCheck {
            lhs,
            rhs,
            holds: lhs == rhs,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosureChi {
    pub k: usize,
    pub chi: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Mod2Check {
    pub chi_m: i64,
    pub closures: Vec<ClosureChi>,
    pub sum: i64,
    pub holds: bool,
}

/// `(chi^+_k - chi^-_k) - (open^+_k - open^-_k) = open^-_{k+2} - open^+_{k+2}`.
#[derive(Clone, Debug, Serialize)]
pub struct TelescopeStep {
    pub k: usize,
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountSummary {
    pub fold_points: usize,
    pub curves: usize,
    pub cusps: usize,
    pub arcs: usize,
    pub circles: usize,
    pub critical_on_manifold: usize,
    pub critical_on_singular_set: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditSummary {
    /// Smallest constraint-Jacobian singular value over sampled points of `M`.
    pub regularity_min_sigma: Option<f64>,
    pub strata: StrataAudit,
    pub curves_closed: bool,
    pub parity_checked: usize,
    pub parity_violations: usize,
    pub set_equality_unmatched: usize,
    pub set_equality_max_distance: f64,
    pub dichotomy_mismatches: usize,
    pub eta_checked: usize,
    pub eta_holds: bool,
    pub certificates: usize,
    pub certificates_cancel: bool,
    pub xi_checked: usize,
    pub genericity_failures_at_used_seed: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub all_hold: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EulerReport {
    pub status: String,
    pub scenario: String,
    pub source_dim: usize,
    pub target_dim: usize,
    pub seed: u64,
    pub genericity_seed_used: u64,
    pub resamples: usize,
    pub covector: Vec<f64>,
    pub chi_m_morse: i64,
    pub chi_m_expected: Option<i64>,
    pub strata: Vec<StratumChi>,
    pub signed_sum: IdentityCheck,
    pub mod2_congruence: Mod2Check,
    pub fold_equality: Option<IdentityCheck>,
    pub telescoping: Vec<TelescopeStep>,
    pub open_fold_chain: IdentityCheck,
    pub route_agreement: bool,
    pub counts: CountSummary,
    pub audits: AuditSummary,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl EulerReport {
    pub fn stratum(&self, k: usize, sign: Sign) -> Option<&StratumChi> {
        self.strata.iter().find(|r| r.k == k && r.sign == sign)
    }

    pub fn exit_code(&self) -> i32 {
        if self.verdict.all_hold {
            0
        } else {
            3
        }
    }
}

fn closure_chi(st: &Stratification, rows: &[StratumChi], k: usize) -> i64 {
    if k > st.n {
        return 0;
    }
    if k % 2 == 1 {
        let plus = rows
            .iter()
            .find(|r| r.k == k && r.sign == Sign::Plus)
            .map_or(0, |r| r.chi_morse);
        let minus = rows
            .iter()
            .find(|r| r.k == k && r.sign == Sign::Minus)
            .map_or(0, |r| r.chi_morse);
        plus + minus - closure_chi(st, rows, k + 1)
    } else if k == st.n {
        st.cusps.len() as i64
    } else {
        0
    }
}

/// Mod-2 congruence with closure characteristics assembled from the signed
/// pieces by inclusion-exclusion over their common boundary.
pub fn verify_mod2_congruence(st: &Stratification, rows: &[StratumChi], chi_m: i64) -> Mod2Check {
    let closures: Vec<ClosureChi> = (1..=st.n)
        .map(|k| ClosureChi {
            k,
            chi: closure_chi(st, rows, k),
        })
        .collect();
    let sum: i64 = closures.iter().map(|c| c.chi).sum();
    Mod2Check {
        chi_m,
        closures,
        sum,
        holds: (chi_m - sum).rem_euclid(2) == 0,
    }
}

/// `chi(M) = chi(A_1^+) - chi(A_1^-)` for fold-only maps; `None` when there
/// are cusps.
pub fn verify_fold_equality(
    st: &Stratification,
    rows: &[StratumChi],
    chi_m: i64,
) -> Option<IdentityCheck> {
    if !st.cusps.is_empty() {
        return None;
    }
    let get = |s: Sign| {
        rows.iter()
            .find(|r| r.k == 1 && r.sign == s)
            .map_or(0, |r| r.chi_morse)
    };
    Some(IdentityCheck::new(
        chi_m,
        get(Sign::Plus) - get(Sign::Minus),
    ))
}

/// Assembles the report for one scenario, stratification and generic
/// covector.
pub fn verify_identities(
    s: &MorinScenario,
    st: &Stratification,
    md: &MorseData,
    seed: u64,
    resamples: usize,
) -> Result<EulerReport> {
    let n = st.n;
    let chi_m = chi_closed_morse(&md.on_manifold);
    let mut rows = Vec::new();
    for k in (1..=n).step_by(2) {
        for sign in [Sign::Plus, Sign::Minus] {
            let (chi, open, boundary) = chi_stratum_via_morse(st, md, k, sign)?;
            let (arcs, circles, points) = match (n - k, k) {
                (1, 1) => (
                    st.arcs.iter().filter(|a| a.sign == sign).count(),
                    st.circles.iter().filter(|c| c.sign == sign).count(),
                    0,
                ),
                (0, _) => (0, 0, st.count(k, sign)),
                _ => (0, 0, 0),
            };
            rows.push(StratumChi {
                k,
                sign,
                dimension: n - k,
                chi_morse: chi,
                open_sum: open,
                boundary_sum: boundary,
                chi_oracle: chi_stratum_oracle(st, k, sign),
                arcs,
                circles,
                points,
            });
        }
    }
    let rhs: i64 = rows
        .iter()
        .map(|r| {
            if r.sign == Sign::Plus {
                r.chi_morse
            } else {
                -r.chi_morse
            }
        })
        .sum();
    let signed_sum = IdentityCheck::new(chi_m, rhs);
    let mod2_congruence = verify_mod2_congruence(st, &rows, chi_m);
    let fold_equality = verify_fold_equality(st, &rows, chi_m);

    let row = |k: usize, s: Sign| rows.iter().find(|r| r.k == k && r.sign == s);
    let telescoping: Vec<TelescopeStep> = (1..=n)
        .step_by(2)
        .map(|k| {
            let d = |f: fn(&StratumChi) -> i64, k: usize| {
                row(k, Sign::Plus).map_or(0, f) - row(k, Sign::Minus).map_or(0, f)
            };
            let lhs = d(|r| r.chi_morse, k) - d(|r| r.open_sum, k);
            let rhs = -d(|r| r.open_sum, k + 2);
            TelescopeStep {
                k,
                lhs,
                rhs,
                holds: lhs == rhs,
            }
        })
        .collect();
    let open_fold_chain = IdentityCheck::new(
        chi_m,
        row(1, Sign::Plus).map_or(0, |r| r.open_sum)
            - row(1, Sign::Minus).map_or(0, |r| r.open_sum),
    );
    let route_agreement = rows
        .iter()
        .all(|r| r.chi_oracle.is_none_or(|o| o == r.chi_morse));

    let audits = AuditSummary {
        regularity_min_sigma: None,
        strata: st.audit.clone(),
        curves_closed: st
            .curves
            .iter()
            .all(|c| c.closure_gap <= s.tolerances.dedup),
        parity_checked: md.parity.checked,
        parity_violations: md.parity.violations.len(),
        set_equality_unmatched: md.set_equality.unmatched.len(),
        set_equality_max_distance: md.set_equality.max_distance,
        dichotomy_mismatches: md.dichotomy_mismatches.len(),
        eta_checked: md.eta.len(),
        eta_holds: md.eta_holds(),
        certificates: md.certificates.len(),
        certificates_cancel: md.certificates_cancel(),
        xi_checked: md.xi_checked,
        genericity_failures_at_used_seed: md.genericity.failures.clone(),
    };

    let mut failures = Vec::new();
    let mut fail = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    fail(
        signed_sum.holds,
        "signed Euler-characteristic sum over odd strata",
    );
    fail(
        mod2_congruence.holds,
        "mod-2 congruence with the closure strata",
    );
    fail(
        fold_equality.as_ref().is_none_or(|c| c.holds),
        "fold-only equality",
    );
    fail(
        telescoping.iter().all(|t| t.holds),
        "telescoping of boundary contributions",
    );
    fail(
        open_fold_chain.holds,
        "Morse count on M against the open fold strata",
    );
    fail(
        route_agreement,
        "Morse route against direct counting on low-dimensional strata",
    );
    fail(
        s.manifold.chi_expected.is_none_or(|e| e == chi_m),
        "Morse count on M against the expected Euler characteristic",
    );
    fail(
        audits.parity_violations == 0,
        "index parity between M and the fold stratum",
    );
    fail(
        audits.set_equality_unmatched == 0,
        "critical set on M equals critical set on the open fold stratum",
    );
    fail(
        audits.dichotomy_mismatches == 0,
        "correctness dichotomy on boundary strata",
    );
    fail(audits.eta_holds, "sign of eta at cusps");
    fail(
        audits.certificates_cancel,
        "cancellation of perturbed non-correct points",
    );
    fail(audits.curves_closed, "closure of traced fold curves");
    fail(
        st.audit.boundary_violations == 0,
        "cusps bound one plus arc and one minus arc",
    );
    fail(
        st.audit.parity_flip_violations == 0,
        "fold sign independent of the cokernel orientation",
    );
    fail(
        st.audit.cusp_route_max_gap <= s.tolerances.dedup,
        "agreement of bisection and cusp-system cusp locations",
    );

    let mut notes = vec![
        "non-correct boundary points enter each signed stratum through their perturbation certificates".to_string(),
    ];
    if fold_equality.is_some() {
        notes.push(
            "fold-only equality uses the minus fold stratum A_1^- on the right-hand side".into(),
        );
    }
    if st.audit.unverified_depth > 0 {
        notes.push(format!(
            "{} point(s) of depth >= 3 are unverified",
            st.audit.unverified_depth
        ));
    }

    Ok(EulerReport {
        status: if failures.is_empty() {
            "pass".into()
        } else {
            "identity-violated".into()
        },
        scenario: s.name.clone(),
        source_dim: s.source_dim(),
        target_dim: n,
        seed,
        genericity_seed_used: md.covector.seed,
        resamples,
        covector: md.covector.a.clone(),
        chi_m_morse: chi_m,
        chi_m_expected: s.manifold.chi_expected,
        strata: rows,
        signed_sum,
        mod2_congruence,
        fold_equality,
        telescoping,
        open_fold_chain,
        route_agreement,
        counts: CountSummary {
            fold_points: st.fold_points.len(),
            curves: st.curves.len(),
            cusps: st.cusps.len(),
            arcs: st.arcs.len(),
            circles: st.circles.len(),
            critical_on_manifold: md.on_manifold.len(),
            critical_on_singular_set: md.on_singular_set.len(),
        },
        audits,
        tolerances: s.tolerances,
        notes,
        verdict: Verdict {
            all_hold: failures.is_empty(),
            failures,
        },
    })
}

/// Points of `M` checked for constraint regularity before a run.
pub const REGULARITY_SAMPLES: usize = 64;

/// Everything computed for one run.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub stratification: Stratification,
    pub morse: MorseData,
    pub report: EulerReport,
}

/// Stratification, generic Morse data and the report for a scenario.
pub fn analyze(s: &MorinScenario, seed: u64, max_resamples: usize) -> Result<Analysis> {
    let regularity = s.manifold.validate_regularity(REGULARITY_SAMPLES, seed)?;
    let st = strata::stratify(s, seed)?;
    let (md, resamples) = morse::generic_morse_data(s, &st, seed, max_resamples)?;
    let mut report = verify_identities(s, &st, &md, seed, resamples)?;
    report.audits.regularity_min_sigma = Some(regularity.min_singular_value);
    Ok(Analysis {
        stratification: st,
        morse: md,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn interval_with_identity_function() {
        // [0, 1], f = x: gradient points inward at 0 and outward at 1
        let b = [
            BoundaryPoint::Correct {
                index: 0,
                inward: true,
            },
            BoundaryPoint::Correct {
                index: 0,
                inward: false,
            },
        ];
        assert_eq!(chi_with_boundary(&[], &b).unwrap(), 1);
    }

    #[test]
    fn disk_with_interior_maximum() {
        // f = -(x^2 + y^2) + y/2 on the unit disk: interior maximum, and on
        // the circle a maximum (index 1) and a minimum (index 0), both with
        // inward gradient
        let b = [
            BoundaryPoint::Correct {
                index: 1,
                inward: true,
            },
            BoundaryPoint::Correct {
                index: 0,
                inward: true,
            },
        ];
        assert_eq!(chi_with_boundary(&[2], &b).unwrap(), 1);
    }

    #[test]
    fn disk_with_interior_minimum() {
        // f = x^2 + (y - 1/2)^2: interior minimum, both circle critical
        // points have outward gradient
        let b = [
            BoundaryPoint::Correct {
                index: 0,
                inward: false,
            },
            BoundaryPoint::Correct {
                index: 1,
                inward: false,
            },
        ];
        assert_eq!(chi_with_boundary(&[0], &b).unwrap(), 1);
    }

    #[test]
    fn signed_arc_between_two_cusps() {
        // an arc with one interior maximum; each end perturbed inward into
        // the other side, one end pushes a minimum into the arc
        let b = [
            BoundaryPoint::Perturbed {
                index: 0,
                inward: true,
                partner_index: None,
            },
            BoundaryPoint::Perturbed {
                index: 0,
                inward: false,
                partner_index: None,
            },
        ];
        assert_eq!(chi_with_boundary(&[1, 0], &b).unwrap(), 1);
    }

    #[test]
    fn unresolved_boundary_point_is_an_error() {
        assert!(chi_with_boundary(&[], &[BoundaryPoint::Unresolved]).is_err());
    }

    fn report(name: &str) -> EulerReport {
        let s = bundled(name).unwrap();
        analyze(&s, 0, morse::MAX_RESAMPLES).unwrap().report
    }

    #[test]
    fn sphere_height_identities() {
        let r = report("s2-height");
        assert_eq!(r.chi_m_morse, 2);
        assert_eq!((r.signed_sum.lhs, r.signed_sum.rhs), (2, 2));
        assert_eq!(r.stratum(1, Sign::Plus).unwrap().chi_morse, 2);
        assert_eq!(r.stratum(1, Sign::Minus).unwrap().chi_morse, 0);
        assert!(r.mod2_congruence.holds);
        assert!(r.fold_equality.as_ref().unwrap().holds);
        assert!(r.verdict.all_hold, "{:?}", r.verdict.failures);
    }

    #[test]
    fn torus_height_identities() {
        let r = report("torus-height");
        assert_eq!(r.chi_m_morse, 0);
        assert_eq!(r.stratum(1, Sign::Plus).unwrap().chi_morse, 2);
        assert_eq!(r.stratum(1, Sign::Minus).unwrap().chi_morse, 2);
        assert_eq!(r.mod2_congruence.sum, 4);
        assert!(r.verdict.all_hold, "{:?}", r.verdict.failures);
    }

    #[test]
    fn projection_identities() {
        let r = report("s3-proj");
        assert_eq!((r.signed_sum.lhs, r.signed_sum.rhs), (0, 0));
        let plus = r.stratum(1, Sign::Plus).unwrap();
        assert_eq!((plus.chi_morse, plus.chi_oracle), (0, Some(0)));
        assert_eq!(plus.circles, 1);
        assert_eq!(r.stratum(1, Sign::Minus).unwrap().chi_morse, 0);
        assert!(r.verdict.all_hold, "{:?}", r.verdict.failures);
    }

    #[test]
    fn cusp_scenario_routes_agree() {
        let r = report("s3-cusps");
        assert!(r.counts.cusps >= 2);
        for row in &r.strata {
            assert_eq!(Some(row.chi_morse), row.chi_oracle);
        }
        assert_eq!(r.stratum(1, Sign::Plus).unwrap().chi_morse, 1);
        assert_eq!(r.stratum(1, Sign::Minus).unwrap().chi_morse, 1);
        assert!(r.fold_equality.is_none());
        assert!(r.verdict.all_hold, "{:?}", r.verdict.failures);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_boundary() -> impl Strategy<Value = BoundaryPoint> {
        prop_oneof![
            (0usize..4, any::<bool>())
                .prop_map(|(index, inward)| BoundaryPoint::Correct { index, inward }),
            (0usize..4, any::<bool>(), prop::option::of(0usize..4)).prop_map(
                |(index, inward, partner_index)| {
                    BoundaryPoint::Perturbed {
                        index,
                        inward,
                        partner_index,
                    }
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn cancelling_pairs_do_not_change_chi(
            interior in prop::collection::vec(0usize..4, 0..8),
            boundary in prop::collection::vec(arb_boundary(), 0..6),
            birth in 0usize..3,
        ) {
            let base = chi_with_boundary(&interior, &boundary).unwrap();
            let mut more = interior.clone();
            more.extend([birth, birth + 1]);
            prop_assert_eq!(chi_with_boundary(&more, &boundary).unwrap(), base);
            // an outward correct point contributes nothing
            let mut b = boundary.clone();
            b.push(BoundaryPoint::Correct { index: birth, inward: false });
            prop_assert_eq!(chi_with_boundary(&interior, &b).unwrap(), base);
        }
    }
}
