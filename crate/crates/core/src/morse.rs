//! Critical points of `L_a o f` on `M` and on the singular set, with Morse
//! indices, correctness, the sign `eta` at cusps, perturbation certificates
//! for non-correct boundary points, and the genericity audit that decides
//! whether a covector `a` is usable.
//!
//! Both levels are handled by one Lagrange formulation. A level is a set
//! `{F(z) = 0}` (`F = g` on `M`, `F` = the singular system on the lifted
//! singular set) and the objective is `phi(z) = <a, f(x)> + <w, z>`, where
//! `w` is zero except when building perturbation certificates. Critical
//! points solve `F(z) = 0, grad phi - DF^T nu = 0`; the Morse index is the
//! negative count of `Z^T Hess(phi - nu^T F) Z` with `Z` spanning `ker DF`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::expr::{CompiledPoly, Poly};
use crate::linalg;
use crate::scenario::MorinScenario;
use crate::seed::{self, Stream};
use crate::solve::{self, PolySystem};
use crate::strata::{self, dedup_by_key, dist, Layout, Sign, Stratification};
use crate::{Error, Point, Result};

/// Default number of covectors tried before giving up.
pub const MAX_RESAMPLES: usize = 16;

/// Reduced Hessians whose smallest relative eigenvalue falls below this are
/// treated as degenerate by the genericity audit. Newton lands within
/// `~sqrt(residual)` of an exactly degenerate critical point, so the
/// eigen-zero threshold alone would miss them.
pub const GENERICITY_MARGIN: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Covector {
    pub a: Vec<f64>,
    pub seed: u64,
}

/// A unit vector in `R^n`, normalized from a standard Gaussian sample of the
/// covector stream of `seed`.
pub fn sample_covector(n: usize, seed: u64) -> Covector {
    let mut rng = seed::rng(seed, Stream::Covector, 0);
    loop {
        let a: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return Covector {
                a: a.into_iter().map(|v| v / norm).collect(),
                seed,
            };
        }
    }
}

impl Covector {
    pub fn new(a: Vec<f64>) -> Self {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        Covector {
            a: a.into_iter().map(|v| v / norm).collect(),
            seed: u64::MAX,
        }
    }
}

// ---------------------------------------------------------------------------
// Lagrange systems
// ---------------------------------------------------------------------------

/// Critical-point machinery for one level (`0` = `M`, `1` = lifted singular
/// set).
#[derive(Clone, Debug)]
pub struct LevelSystem {
    pub level: usize,
    /// Variables of the level.
    pub nz: usize,
    /// Equations of the level.
    pub nf: usize,
    pub n: usize,
    constraints: PolySystem,
    /// Unknowns `(z, nu)`, parameters `(a, w)`.
    lagrange: PolySystem,
    /// `Hess_z (phi - nu^T F)` over `(z, nu, a, w)`.
    hessian: Vec<Vec<CompiledPoly<f64>>>,
}

impl LevelSystem {
    pub fn new(s: &MorinScenario, level: usize) -> Self {
        let l = Layout::of(s);
        let (polys, nz) = match level {
            0 => (s.manifold.constraint_polys().to_vec(), l.big_n),
            1 => (strata::singular_polys(s), l.dim1()),
            _ => panic!("levels above 1 have no Lagrange system"),
        };
        let nf = polys.len();
        let n = l.n;
        let nu = |k: usize| Poly::var(nz + k);
        let a = |i: usize| Poly::var(nz + nf + i);
        let w = |j: usize| Poly::var(nz + nf + n + j);
        let mut phi = Poly::zero();
        for (i, fi) in s.component_polys().iter().enumerate() {
            phi = &phi + &(&a(i) * fi);
        }
        for j in 0..nz {
            phi = &phi + &(&w(j) * &Poly::var(j));
        }
        let mut lagrangian = phi.clone();
        for (k, fk) in polys.iter().enumerate() {
            lagrangian = &lagrangian - &(&nu(k) * fk);
        }
        let mut eqs = polys.clone();
        let grads: Vec<Poly> = (0..nz).map(|j| lagrangian.diff(j)).collect();
        eqs.extend(grads.iter().cloned());
        let hessian = (0..nz)
            .map(|i| (0..nz).map(|j| grads[i].diff(j).compile()).collect())
            .collect();
        LevelSystem {
            level,
            nz,
            nf,
            n,
            constraints: PolySystem::new(polys, nz, 0),
            lagrange: PolySystem::new(eqs, nz + nf, n + nz),
            hessian,
        }
    }

    fn params(&self, a: &[f64], w: Option<&[f64]>) -> Vec<f64> {
        let mut p = a.to_vec();
        match w {
            Some(w) => p.extend_from_slice(w),
            None => p.extend(std::iter::repeat_n(0.0, self.nz)),
        }
        p
    }

    /// `grad_z phi` at `z`.
    pub fn objective_gradient(&self, z: &[f64], a: &[f64], w: Option<&[f64]>) -> DVector<f64> {
        let mut v = z.to_vec();
        v.extend(std::iter::repeat_n(0.0, self.nf));
        let r = self.lagrange.residual(&v, &self.params(a, w));
        r.rows(self.nf, self.nz).into_owned()
    }

    /// Orthonormal basis of `ker DF(z)` (`nz x (nz - nf)`).
    pub fn tangent(&self, z: &[f64]) -> DMatrix<f64> {
        let j = self.constraints.jacobian(z, &[]);
        linalg::columns(&linalg::null_space(&j, self.nf), self.nz)
    }

    /// `Z^T Hess(phi - nu^T F) Z`.
    pub fn reduced_hessian(&self, z: &[f64], nu: &[f64], a: &[f64]) -> DMatrix<f64> {
        let mut v = z.to_vec();
        v.extend_from_slice(nu);
        v.extend(self.params(a, None));
        let h = DMatrix::from_fn(self.nz, self.nz, |i, j| self.hessian[i][j].eval(&v));
        let t = self.tangent(z);
        t.transpose() * h * t
    }

    /// Norm of the projection of `grad phi` on `ker DF`.
    pub fn tangential_gradient(&self, z: &[f64], a: &[f64]) -> f64 {
        let t = self.tangent(z);
        (t.transpose() * self.objective_gradient(z, a, None)).norm()
    }

    /// Newton on the Lagrange system from `z0` with least-squares multipliers.
    pub fn solve(
        &self,
        z0: &[f64],
        a: &[f64],
        w: Option<&[f64]>,
        opts: &solve::NewtonOptions,
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let params = self.params(a, w);
        let grad = self.objective_gradient(z0, a, w);
        let df = self.constraints.jacobian(z0, &[]);
        let nu0 = linalg::lstsq(&df.transpose(), &grad).unwrap_or_else(|| DVector::zeros(self.nf));
        let mut v0 = z0.to_vec();
        v0.extend(nu0.iter());
        let r = solve::newton(
            |v| self.lagrange.eval(v.as_slice(), &params),
            &DVector::from_vec(v0),
            opts,
        )?;
        let v = r.z.as_slice();
        Some((v[..self.nz].to_vec(), v[self.nz..].to_vec(), r.residual))
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inward {
    PlusStratum,
    MinusStratum,
    NotApplicable,
}

impl Inward {
    pub fn as_str(self) -> &'static str {
        match self {
            Inward::PlusStratum => "plus",
            Inward::MinusStratum => "minus",
            Inward::NotApplicable => "n/a",
        }
    }
}

/// A critical point of `L_a o f` restricted to `M` (depth 0) or to the
/// closure of `A_1` (depth 1).
#[derive(Clone, Debug, Serialize)]
pub struct CriticalRecord {
    pub x: Point,
    /// Stratum the function is restricted to.
    pub stratum_depth: usize,
    /// Morin depth of the point itself.
    pub point_depth: usize,
    /// Sign of the point as a singular point.
    pub sign: Sign,
    /// Closure against which correctness is judged.
    pub on_closure_of: usize,
    pub morse_index: usize,
    pub index_basis_dim: usize,
    /// Smallest reduced-Hessian |eigenvalue| relative to the largest.
    pub hessian_min_rel: f64,
    /// Norm of the gradient on the closure `on_closure_of`.
    pub closure_gradient: f64,
    pub correct: Option<bool>,
    pub inward_into: Inward,
    pub eta_sign: Option<i32>,
    pub residual: f64,
    pub seed: u64,
    #[serde(skip)]
    pub z: Vec<f64>,
    #[serde(skip)]
    pub nu: Vec<f64>,
}

/// Replacement data for a non-correct boundary critical point: the linear
/// perturbation `phi + eps <nu, z - z_p>` along the singular set moves the
/// critical point off the boundary to an interior point `p_tilde`.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationCertificate {
    pub p: Point,
    pub p_tilde: Point,
    pub epsilon: f64,
    pub halvings: usize,
    /// Side of `p_tilde` along the transversal pointing into the plus side.
    pub sign_xnk: i32,
    /// Sign of the Hessian determinant of the closure restriction at `p`.
    pub det_sign_closure: i32,
    /// Sign of the bordered boundary determinant, `-eps det Hess(boundary)`.
    pub det_sign_boundary: i32,
    pub boundary_index: usize,
    pub p_tilde_index: usize,
    pub p_tilde_side: Sign,
    /// Contribution of `p` and `p_tilde` to `chi` of the plus and minus closures.
    pub contribution_plus: i64,
    pub contribution_minus: i64,
    /// The perturbed gradient at `p` points into this side.
    pub inward_into: Inward,
    pub cancels: bool,
}

/// `eta` at a cusp: `grad_M(L_a o f) = eta grad_M D` with `D` the
/// degeneracy function whose zero set contains the fold set.
#[derive(Clone, Debug, Serialize)]
pub struct EtaCheck {
    pub x: Point,
    pub eta: f64,
    pub angle: f64,
    /// Index of the cusp as a critical point on the fold closure.
    pub closure_index: usize,
    pub predicted_sign: i32,
    pub holds: bool,
    /// Sign of the Hessian determinant on the fold closure against
    /// `-sign(eta) * det(empty)`.
    pub block_hessian_holds: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ParityAudit {
    pub checked: usize,
    pub violations: Vec<Point>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SetEqualityAudit {
    pub on_manifold: usize,
    pub on_fold_stratum: usize,
    pub unmatched: Vec<Point>,
    pub max_distance: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GenericityAudit {
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseData {
    pub covector: Covector,
    pub on_manifold: Vec<CriticalRecord>,
    pub on_singular_set: Vec<CriticalRecord>,
    pub certificates: Vec<PerturbationCertificate>,
    pub eta: Vec<EtaCheck>,
    pub parity: ParityAudit,
    pub set_equality: SetEqualityAudit,
    pub genericity: GenericityAudit,
    /// `A_n` checks for odd `n`; none of the supported scenarios has any.
    pub xi_checked: usize,
    /// Boundary points whose numeric correctness contradicts the depth
    /// dichotomy (non-correct exactly on `A_{k+1}`).
    pub dichotomy_mismatches: Vec<Point>,
}

impl MorseData {
    pub fn certificates_cancel(&self) -> bool {
        self.certificates.iter().all(|c| c.cancels)
    }

    pub fn eta_holds(&self) -> bool {
        self.eta.iter().all(|e| e.holds && e.block_hessian_holds)
    }
}

fn sign_i(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn parity_sign(k: usize) -> i32 {
    if k.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

struct Ctx<'a> {
    s: &'a MorinScenario,
    st: &'a Stratification,
    cov: &'a Covector,
    lvl0: LevelSystem,
    lvl1: Option<LevelSystem>,
}

fn correctness_threshold(s: &MorinScenario, x: &[f64], a: &[f64]) -> f64 {
    let anorm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    s.tolerances.correctness * anorm * s.df_at(x).norm().max(1.0)
}

/// Norm of the gradient of `L_a o f` along `M` at `x`.
pub fn manifold_gradient(s: &MorinScenario, x: &[f64], a: &[f64]) -> Result<DVector<f64>> {
    let t = s.manifold.tangent_frame(x)?.tangent;
    let g = s.df_at(x).transpose() * DVector::from_column_slice(a);
    Ok(&t * (t.transpose() * g))
}

/// Critical points of `L_a o f` on `M` from random starts.
fn critical_on_manifold(c: &Ctx, genericity: &mut Vec<String>) -> Result<Vec<CriticalRecord>> {
    let s = c.s;
    let n = s.target_dim;
    let opts = s.tolerances.newton();
    let mut rng = seed::rng(c.cov.seed, Stream::CriticalStarts, 0);
    let starts = s.manifold.random_points(200 * (n + 1), &mut rng, &opts);
    let a = &c.cov.a;
    let sols: Vec<(Vec<f64>, Vec<f64>, f64)> = starts
        .par_iter()
        .filter_map(|x0| c.lvl0.solve(x0, a, None, &opts))
        .collect();
    let sols = dedup_by_key(sols, |p| &p.0, s.tolerances.dedup);
    let l = Layout::of(s);
    let mut out = Vec::new();
    for (x, nu, res) in sols {
        let rh = c.lvl0.reduced_hessian(&x, &nu, a);
        let inert = linalg::inertia(&rh, s.tolerances.eigen_zero);
        if inert.min_rel < GENERICITY_MARGIN {
            genericity.push(format!(
                "degenerate critical point of L_a o f on M at {x:?} (relative eigenvalue {:.2e})",
                inert.min_rel
            ));
        }
        // (x, a, nu) solves the singular system: classify the point
        let z = DVector::from_iterator(l.dim1(), x.iter().chain(a).chain(&nu).copied());
        let (depth, sign) = match strata::classify_point(s, &z, res) {
            Ok(p) => (p.depth, p.sign),
            Err(e) => {
                genericity.push(format!(
                    "critical point on M at {x:?} is not classifiable: {e}"
                ));
                (0, Sign::Unsigned)
            }
        };
        if depth >= 2 {
            genericity.push(format!(
                "critical point of L_a o f on M lies on the closure of A_2 at {x:?}"
            ));
        }
        out.push(CriticalRecord {
            x: x.clone(),
            stratum_depth: 0,
            point_depth: depth,
            sign,
            on_closure_of: 0,
            morse_index: inert.n_minus,
            index_basis_dim: rh.nrows(),
            hessian_min_rel: inert.min_rel,
            closure_gradient: 0.0,
            correct: None,
            inward_into: Inward::NotApplicable,
            eta_sign: None,
            residual: res,
            seed: c.cov.seed,
            z: x,
            nu,
        });
    }
    Ok(out)
}

/// Start points on the lifted singular set: local extrema of `L_a o f`
/// along traced curves (`n = 2`), the sample cloud otherwise. Also returns
/// vertices where the slope along a curve nearly vanishes without changing
/// sign (candidates for degenerate critical points).
fn singular_starts(c: &Ctx) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = c.s;
    let l = Layout::of(s);
    let a = &c.cov.a;
    let phi = |x: &[f64]| -> f64 { s.f_at(x).iter().zip(a).map(|(f, a)| f * a).sum() };
    if c.st.n != 2 {
        let starts =
            c.st.fold_points
                .iter()
                .map(|p| p.z().as_slice().to_vec())
                .collect();
        return (starts, Vec::new());
    }
    let mut starts = Vec::new();
    let mut suspects = Vec::new();
    for curve in &c.st.curves {
        let nv = curve.vertices.len();
        let vals: Vec<f64> = curve.vertices.iter().map(|v| phi(&v[..l.big_n])).collect();
        let slope: Vec<f64> = (0..nv)
            .map(|i| {
                let j = (i + 1) % nv;
                (vals[j] - vals[i])
                    / dist(&curve.vertices[i][..l.big_n], &curve.vertices[j][..l.big_n]).max(1e-300)
            })
            .collect();
        let smax = slope.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..nv {
            let prev = slope[(i + nv - 1) % nv];
            let next = slope[i];
            if prev * next <= 0.0 {
                starts.push(curve.vertices[i].clone());
            } else if next.abs() <= prev.abs()
                && next.abs() <= slope[(i + 1) % nv].abs()
                && next.abs() < 1e-3 * smax
            {
                suspects.push(curve.vertices[i].clone());
            }
        }
    }
    (starts, suspects)
}

fn critical_on_singular_set(c: &Ctx, genericity: &mut Vec<String>) -> Result<Vec<CriticalRecord>> {
    let s = c.s;
    let l = Layout::of(s);
    let a = &c.cov.a;
    if c.st.n == 1 {
        // the singular set is finite: every point is critical with index 0
        return Ok(c
            .st
            .fold_points
            .iter()
            .map(|p| CriticalRecord {
                x: p.x.clone(),
                stratum_depth: 1,
                point_depth: p.depth,
                sign: p.sign,
                on_closure_of: 0,
                morse_index: 0,
                index_basis_dim: 0,
                hessian_min_rel: 1.0,
                closure_gradient: 0.0,
                correct: None,
                inward_into: Inward::NotApplicable,
                eta_sign: None,
                residual: p.residual,
                seed: c.cov.seed,
                z: p.z().as_slice().to_vec(),
                nu: Vec::new(),
            })
            .collect());
    }
    let lvl1 = c.lvl1.as_ref().expect("level-1 system for n >= 2");
    let opts = s.tolerances.newton();
    let (starts, suspects) = singular_starts(c);
    let sols: Vec<(Vec<f64>, Vec<f64>, f64)> = starts
        .par_iter()
        .filter_map(|z0| lvl1.solve(z0, a, None, &opts))
        .collect();
    for z0 in &suspects {
        match lvl1.solve(z0, a, None, &opts) {
            Some((z, nu, _)) => {
                let inert = linalg::inertia(&lvl1.reduced_hessian(&z, &nu, a), s.tolerances.eigen_zero);
                if inert.min_rel < GENERICITY_MARGIN || dist(&z[..l.big_n], &z0[..l.big_n]) > 0.1 {
                    genericity.push(format!(
                        "nearly degenerate critical point of L_a o f on the fold set near {:?}",
                        &z0[..l.big_n]
                    ));
                }
            }
            None => genericity.push(format!(
                "slope of L_a o f along the fold set nearly vanishes without a critical point near {:?}",
                &z0[..l.big_n]
            )),
        }
    }
    let big_n = l.big_n;
    let sols = dedup_by_key(sols, |p| &p.0[..big_n], s.tolerances.dedup);
    let mut out = Vec::new();
    for (z, nu, res) in sols {
        let x = z[..big_n].to_vec();
        let rh = lvl1.reduced_hessian(&z, &nu, a);
        let inert = linalg::inertia(&rh, s.tolerances.eigen_zero);
        if inert.min_rel < GENERICITY_MARGIN {
            genericity.push(format!(
                "degenerate critical point of L_a o f on the fold set at {x:?} (relative eigenvalue {:.2e})",
                inert.min_rel
            ));
        }
        let cusp =
            c.st.cusps
                .iter()
                .find(|p| dist(&p.x, &x) < 1e3 * s.tolerances.dedup);
        let (depth, sign) = match cusp {
            Some(_) => (2, Sign::Unsigned),
            None => {
                let p = strata::classify_point(s, &DVector::from_column_slice(&z), res)?;
                if p.depth != 1 {
                    return Err(Error::Numerical(format!(
                        "critical point on the fold set at {x:?} has depth {} but matches no traced cusp",
                        p.depth
                    )));
                }
                (1, p.sign)
            }
        };
        out.push(CriticalRecord {
            x,
            stratum_depth: 1,
            point_depth: depth,
            sign,
            on_closure_of: 0,
            morse_index: inert.n_minus,
            index_basis_dim: rh.nrows(),
            hessian_min_rel: inert.min_rel,
            closure_gradient: 0.0,
            correct: None,
            inward_into: Inward::NotApplicable,
            eta_sign: None,
            residual: res,
            seed: c.cov.seed,
            z,
            nu,
        });
    }
    Ok(out)
}

/// Correctness of a critical record against the closure it bounds.
///
/// Fold records (depth 1 on the fold set) are judged against `M`, cusp
/// records against the fold closure. In both cases the point lies on
/// `A_{k'+1}` for its closure `k'`, so the expected verdict is non-correct.
pub fn classify_correctness(
    s: &MorinScenario,
    lvl1: Option<&LevelSystem>,
    a: &[f64],
    rec: &mut CriticalRecord,
) -> Result<bool> {
    let thr = correctness_threshold(s, &rec.x, a);
    let (closure, grad) = match rec.point_depth {
        1 => (0, manifold_gradient(s, &rec.x, a)?.norm()),
        2 => {
            let lvl1 =
                lvl1.ok_or_else(|| Error::Numerical("cusp without a fold-set system".into()))?;
            (1, lvl1.tangential_gradient(&rec.z, a))
        }
        _ => return Ok(true),
    };
    rec.on_closure_of = closure;
    rec.closure_gradient = grad;
    let correct = grad > thr;
    rec.correct = Some(correct);
    // dichotomy: on A_{k'+1} the point is never correct
    Ok(!correct)
}

/// Sign of `eta` at a cusp, with the predicted sign
/// `-(-1)^{closure index}` (the cusp stratum is zero-dimensional, so its
/// own index is 0).
pub fn eta_sign(
    s: &MorinScenario,
    a: &[f64],
    cusp: &strata::StratumPoint,
    closure_index: usize,
    closure_det_sign: i32,
) -> Result<EtaCheck> {
    let e = cusp
        .degenerate_direction
        .as_ref()
        .ok_or_else(|| Error::Numerical("cusp without a degenerate direction".into()))?;
    let x = &cusp.x;
    let h = s.lagrangian_hessian(x, &cusp.u, &cusp.mu);
    let t = s.manifold.tangent_frame(x)?.tangent;
    let proj = |v: DVector<f64>| &t * (t.transpose() * v);
    let grad_d = proj(&h * DVector::from_column_slice(e));
    let grad_l = proj(s.df_at(x).transpose() * DVector::from_column_slice(a));
    let nd = grad_d.norm();
    let nl = grad_l.norm();
    if nd == 0.0 || nl == 0.0 {
        return Err(Error::Numerical(format!(
            "vanishing gradient in the eta test at {x:?}"
        )));
    }
    let cos = (grad_d.dot(&grad_l) / (nd * nl)).clamp(-1.0, 1.0);
    let angle = cos.abs().acos();
    if angle > s.tolerances.angle {
        return Err(Error::Numerical(format!(
            "gradients at cusp {x:?} are not parallel (angle {angle:.3e} rad)"
        )));
    }
    let eta = grad_d.dot(&grad_l) / (nd * nd);
    let predicted = -parity_sign(closure_index);
    Ok(EtaCheck {
        x: x.clone(),
        eta,
        angle,
        closure_index,
        predicted_sign: predicted,
        holds: sign_i(eta) == predicted,
        block_hessian_holds: closure_det_sign == -sign_i(eta),
    })
}

/// Checks `sign xi(p) = -(-1)^{index on A_{n-1}}` at points of `A_n` for odd
/// `n >= 3`. Returns the number of points checked.
pub fn xi_sign(st: &Stratification) -> Result<usize> {
    if st.n % 2 == 1 && st.n >= 3 && st.count(st.n, Sign::Plus) + st.count(st.n, Sign::Minus) > 0 {
        return Err(Error::Unsupported("A_n points for n >= 3".into()));
    }
    Ok(0)
}

/// Orientation of the singular-set tangent at `z` toward increasing kernel
/// degeneracy (into the plus side).
fn plus_side_tangent(
    s: &MorinScenario,
    sys: &PolySystem,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let l = Layout::of(s);
    let t = strata::curve_tangent(sys, z);
    let opts = s.tolerances.newton();
    let step = 1e-3;
    let mut vals = [0.0; 2];
    for (k, sgn) in [1.0, -1.0].iter().enumerate() {
        let g = z + &t * (sgn * step);
        let w = strata::correct_on_hyperplane(sys, &g, &g, &t, &opts)
            .ok_or_else(|| Error::Numerical("corrector failed next to a cusp".into()))?
            .z;
        vals[k] = strata::degeneracy(s, l.x(w.as_slice()), l.u(w.as_slice()), l.mu(w.as_slice()))?;
    }
    if vals[0] > 0.0 && vals[1] < 0.0 {
        Ok(t)
    } else if vals[0] < 0.0 && vals[1] > 0.0 {
        Ok(-t)
    } else {
        Err(Error::Numerical(format!(
            "kernel degeneracy does not change sign across the cusp at {:?}",
            l.x(z.as_slice())
        )))
    }
}

/// Perturbation certificate for a cusp that is a non-correct critical point
/// of the fold closure.
pub fn perturbation_certificate(
    s: &MorinScenario,
    lvl1: &LevelSystem,
    a: &[f64],
    rec: &CriticalRecord,
) -> Result<PerturbationCertificate> {
    let l = Layout::of(s);
    let sys = strata::singular_system(s);
    let zp = DVector::from_column_slice(&rec.z);
    let nu_dir = plus_side_tangent(s, &sys, &zp)?;
    let scale = lvl1.objective_gradient(&rec.z, a, None).norm().max(1e-12);
    let eps0 = 1e-4 * scale;
    let opts = s.tolerances.newton();
    let rh = lvl1.reduced_hessian(&rec.z, &rec.nu, a);
    let det_sign_closure = linalg::det_sign(&rh);
    let det_sign_boundary = -1;
    let boundary_index = 0;
    for halvings in 0..=8 {
        let eps = eps0 / f64::powi(2.0, halvings as i32);
        let w: Vec<f64> = nu_dir.iter().map(|v| eps * v).collect();
        let Some((zt, nut, _)) = lvl1.solve(&rec.z, a, Some(&w), &opts) else {
            continue;
        };
        let xt = &zt[..l.big_n];
        if dist(xt, &rec.x) <= s.tolerances.dedup {
            continue;
        }
        let delta = strata::degeneracy(s, xt, l.u(&zt), l.mu(&zt))?;
        if delta == 0.0 {
            continue;
        }
        let side = if delta > 0.0 { Sign::Plus } else { Sign::Minus };
        let disp = DVector::from_column_slice(&zt) - &zp;
        let sign_xnk = sign_i(nu_dir.dot(&disp));
        let rt = lvl1.reduced_hessian(&zt, &nut, a);
        let inert = linalg::inertia(&rt, s.tolerances.eigen_zero);
        if inert.n_zero > 0 {
            continue;
        }
        let p_tilde_index = inert.n_minus;
        // p: correct after perturbation, gradient eps*nu points into the plus side
        let (mut plus, mut minus) = (parity_sign(boundary_index) as i64, 0i64);
        match side {
            Sign::Plus => plus += parity_sign(p_tilde_index) as i64,
            _ => minus += parity_sign(p_tilde_index) as i64,
        }
        let eq24 = sign_xnk == -parity_sign(boundary_index) * parity_sign(p_tilde_index);
        let side_ok = (sign_xnk > 0) == (side == Sign::Plus);
        let det_ok = sign_xnk == det_sign_boundary * det_sign_closure;
        return Ok(PerturbationCertificate {
            p: rec.x.clone(),
            p_tilde: xt.to_vec(),
            epsilon: eps,
            halvings,
            sign_xnk,
            det_sign_closure,
            det_sign_boundary,
            boundary_index,
            p_tilde_index,
            p_tilde_side: side,
            contribution_plus: plus,
            contribution_minus: minus,
            inward_into: Inward::PlusStratum,
            cancels: eq24 && side_ok && det_ok && plus - minus == 0,
        });
    }
    Err(Error::Numerical(format!(
        "no perturbation certificate at {:?} after 8 halvings",
        rec.x
    )))
}

/// Items checked by the genericity audit, beyond the per-point failures
/// collected while solving.
fn audit_sets(
    c: &Ctx,
    on_m: &[CriticalRecord],
    on_a1: &[CriticalRecord],
    failures: &mut Vec<String>,
) -> SetEqualityAudit {
    let tol = c.s.tolerances.dedup;
    let folds: Vec<&CriticalRecord> = on_a1.iter().filter(|r| r.point_depth == 1).collect();
    let mut audit = SetEqualityAudit {
        on_manifold: on_m.len(),
        on_fold_stratum: folds.len(),
        ..Default::default()
    };
    for r in on_m {
        let d = folds
            .iter()
            .map(|f| dist(&f.x, &r.x))
            .fold(f64::INFINITY, f64::min);
        if d > tol {
            audit.unmatched.push(r.x.clone());
        } else {
            audit.max_distance = audit.max_distance.max(d);
        }
    }
    for f in &folds {
        let d = on_m
            .iter()
            .map(|r| dist(&f.x, &r.x))
            .fold(f64::INFINITY, f64::min);
        if d > tol {
            audit.unmatched.push(f.x.clone());
        }
    }
    if !audit.unmatched.is_empty() {
        failures.push(format!(
            "critical points on M and on the open fold stratum differ at {} point(s)",
            audit.unmatched.len()
        ));
    }
    // every cusp must be a nondegenerate critical point on the fold closure
    if c.st.n == 2 {
        let found = on_a1.iter().filter(|r| r.point_depth == 2).count();
        if found != c.st.cusps.len() {
            failures.push(format!(
                "{} of {} cusps found as critical points on the fold closure",
                found,
                c.st.cusps.len()
            ));
        }
    }
    audit
}

/// Index parity between `M` and the fold stratum at every critical point:
/// equal parity on `A_1^+`, opposite on `A_1^-`.
pub fn check_fold_index_parity(
    on_m: &[CriticalRecord],
    on_a1: &[CriticalRecord],
    tol: f64,
) -> ParityAudit {
    let mut audit = ParityAudit::default();
    for q in on_m {
        let Some(r) = on_a1
            .iter()
            .filter(|r| r.point_depth == 1)
            .find(|r| dist(&r.x, &q.x) <= tol)
        else {
            continue;
        };
        audit.checked += 1;
        let shift = usize::from(q.sign == Sign::Minus);
        if q.morse_index % 2 != (r.morse_index + shift) % 2 {
            audit.violations.push(q.x.clone());
        }
    }
    audit
}

/// Critical data, certificates and audits for one covector.
pub fn morse_data(s: &MorinScenario, st: &Stratification, cov: &Covector) -> Result<MorseData> {
    let ctx = Ctx {
        s,
        st,
        cov,
        lvl0: LevelSystem::new(s, 0),
        lvl1: (st.n >= 2).then(|| LevelSystem::new(s, 1)),
    };
    let mut failures = Vec::new();
    let on_m = critical_on_manifold(&ctx, &mut failures)?;
    let mut on_a1 = critical_on_singular_set(&ctx, &mut failures)?;
    let a = &cov.a;
    let mut dichotomy = Vec::new();
    let mut certificates = Vec::new();
    let mut eta = Vec::new();
    for rec in on_a1.iter_mut() {
        if st.n == 1 {
            continue;
        }
        if !classify_correctness(s, ctx.lvl1.as_ref(), a, rec)? {
            dichotomy.push(rec.x.clone());
        }
        if rec.point_depth == 2 && rec.correct == Some(false) {
            let lvl1 = ctx.lvl1.as_ref().expect("n >= 2");
            let cert = perturbation_certificate(s, lvl1, a, rec)?;
            rec.inward_into = cert.inward_into;
            // the cusp must not be critical on M
            let gm = manifold_gradient(s, &rec.x, a)?.norm();
            if gm <= correctness_threshold(s, &rec.x, a) {
                failures.push(format!("cusp {:?} is critical for L_a o f on M", rec.x));
            } else {
                let cusp = st
                    .cusps
                    .iter()
                    .min_by(|p, q| dist(&p.x, &rec.x).total_cmp(&dist(&q.x, &rec.x)))
                    .expect("cusp record matches a cusp");
                let det = linalg::det_sign(&lvl1.reduced_hessian(&rec.z, &rec.nu, a));
                let check = eta_sign(s, a, cusp, rec.morse_index, det)?;
                rec.eta_sign = Some(sign_i(check.eta));
                eta.push(check);
            }
            certificates.push(cert);
        }
    }
    let set_equality = audit_sets(&ctx, &on_m, &on_a1, &mut failures);
    let parity = check_fold_index_parity(&on_m, &on_a1, s.tolerances.dedup);
    let xi_checked = xi_sign(st)?;
    let genericity = GenericityAudit {
        passed: failures.is_empty(),
        failures,
    };
    Ok(MorseData {
        covector: cov.clone(),
        on_manifold: on_m,
        on_singular_set: on_a1,
        certificates,
        eta,
        parity,
        set_equality,
        genericity,
        xi_checked,
        dichotomy_mismatches: dichotomy,
    })
}

/// The genericity verdict for `a`: `Ok(data)` when usable, otherwise the
/// reasons to resample.
pub fn validate_genericity(
    s: &MorinScenario,
    st: &Stratification,
    cov: &Covector,
) -> Result<std::result::Result<MorseData, Vec<String>>> {
    let data = morse_data(s, st, cov)?;
    if data.genericity.passed {
        Ok(Ok(data))
    } else {
        Ok(Err(data.genericity.failures))
    }
}

/// Tries covectors with seeds `root_seed, root_seed + 1, ...` until one
/// passes the genericity audit.
pub fn generic_morse_data(
    s: &MorinScenario,
    st: &Stratification,
    root_seed: u64,
    max_resamples: usize,
) -> Result<(MorseData, usize)> {
    let mut failures = Vec::new();
    for attempt in 0..max_resamples.max(1) {
        let seed = root_seed.wrapping_add(attempt as u64);
        let cov = sample_covector(s.target_dim, seed);
        match validate_genericity(s, st, &cov)? {
            Ok(data) => return Ok((data, attempt)),
            Err(reasons) => failures.extend(
                reasons
                    .into_iter()
                    .map(|r| format!("covector seed {seed}: {r}")),
            ),
        }
    }
    Err(Error::GenericityExhausted {
        attempts: max_resamples.max(1),
        failures,
    })
}
