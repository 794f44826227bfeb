//! The Morin stratification `A1bar ⊇ A2bar ⊇ ...` of `f|_M` and the split of
//! odd strata into `A_k^+` and `A_k^-`.
//!
//! Singular points are found in an extended space: `(x, u, mu)` with `u` a
//! unit cokernel covector and `mu` the constraint multipliers,
//!
//! ```text
//! g(x) = 0,   Df(x)^T u - Dg(x)^T mu = 0,   |u|^2 = 1.
//! ```
//!
//! Its solution set is a smooth `(n-1)`-manifold that double covers `A1bar`
//! through `(x, u, mu) ~ (x, -u, -mu)`. Cusps (`A_2`) add a unit kernel
//! vector `e` on which the kernel Hessian degenerates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::expr::{CompiledPoly, Poly};
use crate::jet::TaylorPoly;
use crate::linalg;
use crate::scenario::MorinScenario;
use crate::seed::{self, Stream};
use crate::solve::{self, NewtonOptions, PolySystem};
use crate::{Error, Point, Result};

/// Highest Taylor order examined when classifying depth.
pub const JET_ORDER: usize = 8;
/// Depths above this are reported but not numerically trusted.
pub const MAX_VERIFIED_DEPTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
    Unsigned,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
            Sign::Unsigned => "unsigned",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Eigenvalue sign counts of the kernel Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticSignature {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
    pub lambda_parity: Parity,
    /// Smallest |eigenvalue| relative to the largest (floor 1).
    pub min_rel: f64,
}

impl QuadraticSignature {
    pub fn from_matrix(kh: &DMatrix<f64>, zero_rel: f64) -> Self {
        let i = linalg::inertia(kh, zero_rel);
        QuadraticSignature {
            n_plus: i.n_plus,
            n_minus: i.n_minus,
            n_zero: i.n_zero,
            lambda_parity: if i.n_minus.is_multiple_of(2) {
                Parity::Even
            } else {
                Parity::Odd
            },
            min_rel: i.min_rel,
        }
    }

    /// Signature of the negated form (cokernel covector flipped).
    pub fn flipped(&self) -> Self {
        QuadraticSignature {
            n_plus: self.n_minus,
            n_minus: self.n_plus,
            lambda_parity: if self.n_plus.is_multiple_of(2) {
                Parity::Even
            } else {
                Parity::Odd
            },
            ..*self
        }
    }
}

/// A located singular point.
#[derive(Clone, Debug, Serialize)]
pub struct StratumPoint {
    pub x: Point,
    pub depth: usize,
    /// Unit cokernel covector, sign-normalized.
    pub u: Vec<f64>,
    /// Constraint multipliers matching `u`.
    pub mu: Vec<f64>,
    pub kernel_basis: Vec<Vec<f64>>,
    pub degenerate_direction: Option<Vec<f64>>,
    pub signature: QuadraticSignature,
    pub sign: Sign,
    /// Taylor coefficients of the reduced function along the degenerate
    /// direction (empty for folds).
    pub reduced_jet: Vec<f64>,
    pub depth_verified: bool,
    pub residual: f64,
}

impl StratumPoint {
    /// Extended coordinates `(x, u, mu)`.
    pub fn z(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len() + self.u.len() + self.mu.len(),
            self.x.iter().chain(&self.u).chain(&self.mu).copied(),
        )
    }
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

/// Index layout of the extended variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    /// Ambient dimension `N`.
    pub big_n: usize,
    /// Target dimension `n`.
    pub n: usize,
    /// Number of constraints `c = N - m`.
    pub c: usize,
}

impl Layout {
    pub fn of(s: &MorinScenario) -> Self {
        Layout {
            big_n: s.ambient_dim(),
            n: s.target_dim,
            c: s.codim(),
        }
    }

    /// Number of `(x, u, mu)` variables.
    pub fn dim1(&self) -> usize {
        self.big_n + self.n + self.c
    }

    /// Number of singular-system equations.
    pub fn eqs1(&self) -> usize {
        self.big_n + self.c + 1
    }

    pub fn x<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[..self.big_n]
    }

    pub fn u<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[self.big_n..self.big_n + self.n]
    }

    pub fn mu<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[self.big_n + self.n..self.dim1()]
    }

    /// `(x, -u, -mu)`.
    pub fn antipode(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut w = z.clone();
        for i in self.big_n..self.dim1() {
            w[i] = -w[i];
        }
        w
    }
}

/// Polynomials of the singular system in `(x, u, mu)`.
pub fn singular_polys(s: &MorinScenario) -> Vec<Poly> {
    let l = Layout::of(s);
    let f = s.component_polys();
    let g = s.manifold.constraint_polys();
    let u = |i: usize| Poly::var(l.big_n + i);
    let mu = |k: usize| Poly::var(l.big_n + l.n + k);
    let mut eqs: Vec<Poly> = g.to_vec();
    for j in 0..l.big_n {
        let mut e = Poly::zero();
        for (i, fi) in f.iter().enumerate() {
            e = &e + &(&u(i) * &fi.diff(j));
        }
        for (k, gk) in g.iter().enumerate() {
            e = &e - &(&mu(k) * &gk.diff(j));
        }
        eqs.push(e);
    }
    let mut norm = Poly::int(-1);
    for i in 0..l.n {
        norm = &norm + &u(i).pow(2);
    }
    eqs.push(norm);
    eqs
}

/// The singular system `{g = 0; Df^T u - Dg^T mu = 0; |u|^2 = 1}`.
pub fn singular_system(s: &MorinScenario) -> PolySystem {
    PolySystem::new(singular_polys(s), Layout::of(s).dim1(), 0)
}

/// Variables of the cusp system after `(x, u, mu)`: `e` (N), `s` (1),
/// `rho` (c), `omega` (n).
pub fn cusp_polys(s: &MorinScenario) -> Vec<Poly> {
    let l = Layout::of(s);
    let f = s.component_polys();
    let g = s.manifold.constraint_polys();
    let d1 = l.dim1();
    let u = |i: usize| Poly::var(l.big_n + i);
    let mu = |k: usize| Poly::var(l.big_n + l.n + k);
    let e = |j: usize| Poly::var(d1 + j);
    let slack = Poly::var(d1 + l.big_n);
    let rho = |k: usize| Poly::var(d1 + l.big_n + 1 + k);
    let omega = |i: usize| Poly::var(d1 + l.big_n + 1 + l.c + i);

    let mut eqs = singular_polys(s);
    for gk in g {
        let mut r = Poly::zero();
        for j in 0..l.big_n {
            r = &r + &(&gk.diff(j) * &e(j));
        }
        eqs.push(r);
    }
    for (i, fi) in f.iter().enumerate() {
        let mut r = -&(&slack * &u(i));
        for j in 0..l.big_n {
            r = &r + &(&fi.diff(j) * &e(j));
        }
        eqs.push(r);
    }
    for j in 0..l.big_n {
        let mut r = Poly::zero();
        for k in 0..l.big_n {
            let mut hjk = Poly::zero();
            for (i, fi) in f.iter().enumerate() {
                hjk = &hjk + &(&u(i) * &fi.diff(j).diff(k));
            }
            for (q, gq) in g.iter().enumerate() {
                hjk = &hjk - &(&mu(q) * &gq.diff(j).diff(k));
            }
            r = &r + &(&hjk * &e(k));
        }
        for (q, gq) in g.iter().enumerate() {
            r = &r - &(&gq.diff(j) * &rho(q));
        }
        for (i, fi) in f.iter().enumerate() {
            r = &r - &(&fi.diff(j) * &omega(i));
        }
        eqs.push(r);
    }
    let mut orth = Poly::zero();
    for i in 0..l.n {
        orth = &orth + &(&u(i) * &omega(i));
    }
    eqs.push(orth);
    let mut norm = Poly::int(-1);
    for j in 0..l.big_n {
        norm = &norm + &e(j).pow(2);
    }
    eqs.push(norm);
    eqs
}

pub fn cusp_system(s: &MorinScenario) -> PolySystem {
    let l = Layout::of(s);
    PolySystem::new(cusp_polys(s), l.dim1() + l.big_n + 1 + l.c + l.n, 0)
}

// ---------------------------------------------------------------------------
// Kernel data
// ---------------------------------------------------------------------------

/// Tangent frame, kernel of `d(f|_M)` and the Lagrangian Hessian at a point.
#[derive(Clone, Debug)]
pub struct KernelData {
    /// `N x m`
    pub tangent: DMatrix<f64>,
    /// `N x (m - n + 1)`, orthonormal columns.
    pub kernel: DMatrix<f64>,
    /// Ambient Hessian of `<u, f> - <mu, g>`.
    pub hessian: DMatrix<f64>,
    /// `K^T H K`
    pub kernel_hessian: DMatrix<f64>,
}

pub fn kernel_data(s: &MorinScenario, x: &[f64], u: &[f64], mu: &[f64]) -> Result<KernelData> {
    let frame = s.manifold.tangent_frame(x)?;
    let j = s.df_at(x) * &frame.tangent;
    let kin = linalg::null_space(&j, s.target_dim - 1);
    let kernel = &frame.tangent * linalg::columns(&kin, frame.tangent.ncols());
    let hessian = s.lagrangian_hessian(x, u, mu);
    let kernel_hessian = kernel.transpose() * &hessian * &kernel;
    Ok(KernelData {
        tangent: frame.tangent,
        kernel,
        hessian,
        kernel_hessian,
    })
}

/// Sign of `det(K^T H K)`: positive exactly on `A_1^+` (the kernel has even
/// dimension, so the sign ignores both the kernel basis and the sign of `u`).
pub fn degeneracy(s: &MorinScenario, x: &[f64], u: &[f64], mu: &[f64]) -> Result<f64> {
    let kd = kernel_data(s, x, u, mu)?;
    Ok(kd.kernel_hessian.determinant())
}

/// Kernel-Hessian signature at a point with cokernel `u`.
pub fn kernel_hessian(
    s: &MorinScenario,
    x: &[f64],
    u: &[f64],
    mu: &[f64],
) -> Result<QuadraticSignature> {
    let kd = kernel_data(s, x, u, mu)?;
    Ok(QuadraticSignature::from_matrix(
        &kd.kernel_hessian,
        s.tolerances.eigen_zero,
    ))
}

/// `plus` iff the negative index of the kernel form is even (odd depth only).
pub fn sign_split(sig: &QuadraticSignature, depth: usize) -> Sign {
    if depth.is_multiple_of(2) {
        Sign::Unsigned
    } else if sig.lambda_parity == Parity::Even {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Flips `(u, mu)` so the first clearly nonzero coordinate of `u` is positive.
pub fn normalize_cokernel(l: &Layout, z: &mut DVector<f64>) {
    let flip = l
        .u(z.as_slice())
        .iter()
        .find(|v| v.abs() > 1e-8)
        .is_some_and(|&v| v < 0.0);
    if flip {
        *z = l.antipode(z);
    }
}

// ---------------------------------------------------------------------------
// Depth classification
// ---------------------------------------------------------------------------

/// Taylor coefficients `r_0 .. r_order` of the reduced function
/// `t -> <u, f(c(t))>`, where `c(t)` runs through the slice
/// `{g = 0, W^T (f - f(p)) = 0}` (`W` spans `u^perp`) with `e . (c - p) = t`,
/// critical for `<u, f>` in every slice direction transverse to `e`.
pub fn reduced_jet(
    s: &MorinScenario,
    x: &[f64],
    u: &[f64],
    mu: &[f64],
    e: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    type Tp = TaylorPoly<f64>;
    let l = Layout::of(s);
    let (bn, c, n) = (l.big_n, l.c, l.n);
    let uvec = DVector::from_column_slice(u);
    let w = linalg::complement(std::slice::from_ref(&uvec), n);
    let ng = c + n - 1;
    let dim = bn + ng + 1;

    let dg = s.manifold.dg_at(x);
    let df = s.df_at(x);
    let h = s.lagrangian_hessian(x, u, mu);
    let mut dbig = DMatrix::zeros(ng, bn);
    dbig.rows_mut(0, c).copy_from(&dg);
    for (k, wk) in w.iter().enumerate() {
        let row = wk.transpose() * &df;
        dbig.row_mut(c + k).copy_from(&row);
    }
    let mut j0 = DMatrix::zeros(dim, dim);
    j0.view_mut((0, 0), (bn, bn)).copy_from(&h);
    j0.view_mut((0, bn), (bn, ng))
        .copy_from(&(-dbig.transpose()));
    j0.view_mut((bn, 0), (ng, bn)).copy_from(&dbig);
    for j in 0..bn {
        j0[(j, bn + ng)] = -e[j];
        j0[(bn + ng, j)] = e[j];
    }
    let lu = j0.lu();
    if linalg::det_sign(&lu.u().clone_owned()) == 0 {
        return Err(Error::Numerical(
            "reduced-function system is singular (kernel degenerates in more than one direction)"
                .into(),
        ));
    }

    let fp: Vec<Poly> = s.component_polys().to_vec();
    let gp: Vec<Poly> = s.manifold.constraint_polys().to_vec();
    let comp = |p: &Poly| -> CompiledPoly<Tp> { p.compile() };
    let f_c: Vec<_> = fp.iter().map(comp).collect();
    let g_c: Vec<_> = gp.iter().map(comp).collect();
    let df_c: Vec<Vec<_>> = fp
        .iter()
        .map(|p| (0..bn).map(|j| comp(&p.diff(j))).collect())
        .collect();
    let dg_c: Vec<Vec<_>> = gp
        .iter()
        .map(|p| (0..bn).map(|j| comp(&p.diff(j))).collect())
        .collect();
    let f_at_p = s.f_at(x);

    let mut y: Vec<Tp> = Vec::with_capacity(dim);
    y.extend(x.iter().map(|&v| Tp::constant(v)));
    y.extend(mu.iter().map(|&v| Tp::constant(v)));
    y.extend((0..n - 1).map(|_| Tp::constant(0.0)));
    y.push(Tp::constant(0.0));
    let t = Tp::new(vec![0.0, 1.0]);

    let residual = |y: &[Tp]| -> Vec<Tp> {
        let cx = &y[..bn];
        let lam_g = &y[bn..bn + c];
        let lam_w = &y[bn + c..bn + ng];
        let sigma = &y[bn + ng];
        let tr = |v: Tp| v.truncate(order);
        let fv: Vec<Tp> = f_c.iter().map(|p| tr(p.eval(cx))).collect();
        let gv: Vec<Tp> = g_c.iter().map(|p| tr(p.eval(cx))).collect();
        let dfv: Vec<Vec<Tp>> = df_c
            .iter()
            .map(|r| r.iter().map(|p| tr(p.eval(cx))).collect())
            .collect();
        let dgv: Vec<Vec<Tp>> = dg_c
            .iter()
            .map(|r| r.iter().map(|p| tr(p.eval(cx))).collect())
            .collect();
        // effective covector u - W lam_w on f
        let mut coef: Vec<Tp> = u.iter().map(|&v| Tp::constant(v)).collect();
        for (k, wk) in w.iter().enumerate() {
            for i in 0..n {
                coef[i] = coef[i].clone() - lam_w[k].scale(wk[i]);
            }
        }
        let mut out = Vec::with_capacity(dim);
        for j in 0..bn {
            let mut r = Tp::constant(0.0) - sigma.scale(e[j]);
            for i in 0..n {
                r = r + coef[i].clone() * dfv[i][j].clone();
            }
            for q in 0..c {
                r = r - lam_g[q].clone() * dgv[q][j].clone();
            }
            out.push(tr(r));
        }
        out.extend(gv);
        for wk in &w {
            let mut r = Tp::constant(0.0);
            for i in 0..n {
                r = r + (fv[i].clone() - Tp::constant(f_at_p[i])).scale(wk[i]);
            }
            out.push(tr(r));
        }
        let mut r = Tp::constant(0.0) - t.clone();
        for j in 0..bn {
            r = r + (cx[j].clone() - Tp::constant(x[j])).scale(e[j]);
        }
        out.push(tr(r));
        out
    };

    for _ in 0..=order + 1 {
        let r = residual(&y);
        let mut coeffs: Vec<Vec<f64>> = vec![vec![0.0; dim]; order + 1];
        for (q, rq) in r.iter().enumerate() {
            for (k, row) in coeffs.iter_mut().enumerate() {
                row[q] = rq.coeff(k);
            }
        }
        let mut done = true;
        let mut delta: Vec<Vec<f64>> = vec![vec![0.0; order + 1]; dim];
        for (k, rk) in coeffs.iter().enumerate() {
            if rk.iter().all(|v| v.abs() < 1e-15) {
                continue;
            }
            done = false;
            let sol = lu
                .solve(&(-DVector::from_column_slice(rk)))
                .ok_or_else(|| Error::Numerical("reduced-function solve failed".into()))?;
            for q in 0..dim {
                delta[q][k] = sol[q];
            }
        }
        if done {
            break;
        }
        for q in 0..dim {
            y[q] = y[q].clone() + Tp::new(delta[q].clone());
        }
    }

    let cx = &y[..bn];
    let mut phi = Tp::constant(0.0);
    for (i, fc) in f_c.iter().enumerate() {
        phi = phi + fc.eval(cx).truncate(order).scale(u[i]);
    }
    Ok((0..=order).map(|k| phi.coeff(k)).collect())
}

/// Depth `k` from the reduced jet: the first order `r >= 2` with a
/// coefficient above `tol` gives `k = r - 1`.
pub fn depth_from_jet(jet: &[f64], tol: f64) -> Option<usize> {
    jet.iter()
        .enumerate()
        .skip(2)
        .find(|(_, c)| c.abs() > tol)
        .map(|(r, _)| r - 1)
}

/// Classifies a point of the singular set, orienting `u` (odd depth) or the
/// degenerate direction (even depth) so the leading reduced coefficient is
/// positive.
pub fn classify_point(s: &MorinScenario, z: &DVector<f64>, residual: f64) -> Result<StratumPoint> {
    let l = Layout::of(s);
    let mut z = z.clone();
    normalize_cokernel(&l, &mut z);
    let x = l.x(z.as_slice()).to_vec();
    let mut u = l.u(z.as_slice()).to_vec();
    let mut mu = l.mu(z.as_slice()).to_vec();
    let kd = kernel_data(s, &x, &u, &mu)?;
    let mut sig = QuadraticSignature::from_matrix(&kd.kernel_hessian, s.tolerances.eigen_zero);
    let kernel_basis: Vec<Vec<f64>> = kd
        .kernel
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    if sig.n_zero == 0 {
        return Ok(StratumPoint {
            x,
            depth: 1,
            u,
            mu,
            kernel_basis,
            degenerate_direction: None,
            sign: sign_split(&sig, 1),
            signature: sig,
            reduced_jet: Vec::new(),
            depth_verified: true,
            residual,
        });
    }
    if sig.n_zero > 1 {
        return Err(Error::NotMorin(format!(
            "kernel Hessian at {x:?} has {} zero eigenvalues",
            sig.n_zero
        )));
    }
    let pairs = linalg::eigen_by_magnitude(&kd.kernel_hessian);
    let mut e: Vec<f64> = (&kd.kernel * &pairs[0].1).iter().copied().collect();
    let jet = reduced_jet(s, &x, &u, &mu, &e, JET_ORDER)?;
    let scale = kd.hessian.norm().max(1.0);
    let depth = depth_from_jet(&jet, s.tolerances.eigen_zero * scale).ok_or_else(|| {
        Error::NotMorin(format!(
            "reduced function at {x:?} vanishes to order {JET_ORDER} (coefficients {jet:?})"
        ))
    })?;
    if depth > s.target_dim {
        return Err(Error::NotMorin(format!(
            "point {x:?} has depth {depth} > target dimension {}",
            s.target_dim
        )));
    }
    let lead = jet[depth + 1];
    let mut jet = jet;
    if lead < 0.0 {
        if depth % 2 == 1 {
            // odd leading order: flip the cokernel
            u.iter_mut().for_each(|v| *v = -*v);
            mu.iter_mut().for_each(|v| *v = -*v);
            sig = sig.flipped();
            jet.iter_mut().for_each(|v| *v = -*v);
        } else {
            // even depth means odd leading order in t: flip the direction
            e.iter_mut().for_each(|v| *v = -*v);
            jet.iter_mut().enumerate().for_each(|(k, v)| {
                if k % 2 == 1 {
                    *v = -*v
                }
            });
        }
    }
    Ok(StratumPoint {
        x,
        depth,
        u,
        mu,
        kernel_basis,
        degenerate_direction: Some(e),
        sign: sign_split(&sig, depth),
        signature: sig,
        reduced_jet: jet,
        depth_verified: depth <= MAX_VERIFIED_DEPTH,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Sampling and tracing
// ---------------------------------------------------------------------------

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Sorts by `key` lexicographically and keeps the first of every cluster of
/// points closer than `radius`.
pub fn dedup_by_key<T, F>(mut items: Vec<T>, key: F, radius: f64) -> Vec<T>
where
    F: Fn(&T) -> &[f64],
{
    items.sort_by(|a, b| lex_cmp(key(a), key(b)));
    let mut kept: Vec<T> = Vec::new();
    for it in items {
        if kept.iter().all(|k| dist(key(k), key(&it)) > radius) {
            kept.push(it);
        }
    }
    kept
}

/// Random starting points `(x, u, mu)` near the singular system.
fn singular_starts(s: &MorinScenario, count: usize, root_seed: u64) -> Vec<DVector<f64>> {
    let l = Layout::of(s);
    let opts = s.tolerances.newton();
    let mut rng = seed::rng(root_seed, Stream::SingularCloud, 0);
    let xs = s.manifold.random_points(count, &mut rng, &opts);
    xs.into_iter()
        .map(|x| {
            let mut u: Vec<f64> = (0..l.n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            u.iter_mut().for_each(|v| *v /= nu);
            let dg = s.manifold.dg_at(&x);
            let rhs = s.df_at(&x).transpose() * DVector::from_column_slice(&u);
            let mu = linalg::lstsq(&dg.transpose(), &rhs).unwrap_or_else(|| DVector::zeros(l.c));
            DVector::from_iterator(
                l.dim1(),
                x.iter().chain(&u).copied().chain(mu.iter().copied()),
            )
        })
        .collect()
}

/// Multistart Newton (Gauss–Newton when `n >= 2`) on the singular system.
/// Returns converged, cokernel-normalized extended points with residuals,
/// deduplicated by `x`.
pub fn singular_cloud(
    s: &MorinScenario,
    sys: &PolySystem,
    count: usize,
    root_seed: u64,
) -> Vec<(DVector<f64>, f64)> {
    let l = Layout::of(s);
    let opts = s.tolerances.newton();
    let starts = singular_starts(s, count, root_seed);
    let solved: Vec<(DVector<f64>, f64)> = starts
        .par_iter()
        .filter_map(|z0| {
            let r = solve::newton(|z| sys.eval(z.as_slice(), &[]), z0, &opts)?;
            let mut z = r.z;
            normalize_cokernel(&l, &mut z);
            Some((z, r.residual))
        })
        .collect();
    let big_n = l.big_n;
    dedup_by_key(solved, |p| &p.0.as_slice()[..big_n], s.tolerances.dedup)
}

/// Unit tangent of a one-dimensional solution set (null vector of the
/// Jacobian), signed so its largest entry is positive.
pub fn curve_tangent(sys: &PolySystem, z: &DVector<f64>) -> DVector<f64> {
    let j = sys.jacobian(z.as_slice(), &[]);
    let ns = linalg::null_space(&j, sys.neqs());
    let t = ns[0].clone();
    let imax = t.iamax();
    if t[imax] < 0.0 {
        -t
    } else {
        t
    }
}

/// Newton on `F(w) = 0` together with `normal . (w - anchor) = 0`.
pub fn correct_on_hyperplane(
    sys: &PolySystem,
    guess: &DVector<f64>,
    anchor: &DVector<f64>,
    normal: &DVector<f64>,
    opts: &NewtonOptions,
) -> Option<solve::NewtonResult> {
    let d = sys.nvars();
    let eval = |w: &DVector<f64>| {
        let (f, j) = sys.eval(w.as_slice(), &[]);
        let mut fa = DVector::zeros(f.len() + 1);
        fa.rows_mut(0, f.len()).copy_from(&f);
        fa[f.len()] = normal.dot(&(w - anchor));
        let mut ja = DMatrix::zeros(j.nrows() + 1, d);
        ja.rows_mut(0, j.nrows()).copy_from(&j);
        ja.row_mut(j.nrows()).copy_from(&normal.transpose());
        (fa, ja)
    };
    solve::newton(eval, guess, opts)
}

/// A closed curve of the singular set traced in `(x, u, mu)` space.
#[derive(Clone, Debug, Serialize)]
pub struct TracedCurve {
    /// Vertices in extended coordinates; the curve closes from the last
    /// vertex back to the first (possibly through the antipodal lift).
    pub vertices: Vec<Vec<f64>>,
    /// Distance from the start vertex of the point reached by continuing
    /// from the last vertex onto the hyperplane through the start.
    pub closure_gap: f64,
    /// Whether the lift returned through `(x, -u, -mu)`.
    pub closes_antipodally: bool,
    /// `det(K^T H K)` at each vertex.
    pub degeneracy: Vec<f64>,
    /// Length of the `x` polyline.
    pub length: f64,
}

impl TracedCurve {
    pub fn x(&self, i: usize, big_n: usize) -> &[f64] {
        &self.vertices[i][..big_n]
    }

    /// Segment `i` goes from vertex `i` to vertex `i + 1` (wrapping); the
    /// end vertex is returned in the same lift as the start.
    pub fn segment(&self, i: usize, l: &Layout) -> (DVector<f64>, DVector<f64>) {
        let a = DVector::from_column_slice(&self.vertices[i]);
        let nv = self.vertices.len();
        let b = DVector::from_column_slice(&self.vertices[(i + 1) % nv]);
        let b = if i + 1 == nv && self.closes_antipodally {
            l.antipode(&b)
        } else {
            b
        };
        (a, b)
    }
}

/// Pseudo-arclength continuation of the curve through `z0` with step `h`
/// (in extended coordinates) until it closes.
pub fn trace_curve(
    s: &MorinScenario,
    sys: &PolySystem,
    z0: &DVector<f64>,
    h: f64,
) -> Result<TracedCurve> {
    let l = Layout::of(s);
    let opts = s.tolerances.newton();
    let max_steps = (400.0 / h) as usize;
    let hmin = h * 1e-4;
    let start = z0.clone();
    let start_anti = l.antipode(&start);
    let mut t = curve_tangent(sys, &start);
    let mut z = start.clone();
    let mut verts = vec![start.clone()];
    let mut step = h;
    let mut length = 0.0;
    let mut travelled = 0.0;
    for _ in 0..max_steps {
        // closure test against both lifts of the start
        if travelled > 4.0 * h {
            for (target, anti) in [(&start, false), (&start_anti, true)] {
                let gap = target - &z;
                if gap.norm() < 1.5 * h && gap.dot(&t) > 0.0 {
                    // continue from the last vertex onto the hyperplane through the
                    // start; landing on the start means the same branch came back
                    let pred = &z + &t * gap.dot(&t);
                    let fin =
                        correct_on_hyperplane(sys, &pred, target, &t, &opts).ok_or_else(|| {
                            Error::Numerical(
                                "final corrector failed while closing a singular curve".into(),
                            )
                        })?;
                    length += dist(l.x(z.as_slice()), l.x(target.as_slice()));
                    let closure_gap = (&fin.z - target).norm();
                    let degeneracy = verts
                        .par_iter()
                        .map(|v| {
                            degeneracy(s, l.x(v.as_slice()), l.u(v.as_slice()), l.mu(v.as_slice()))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    return Ok(TracedCurve {
                        vertices: verts.iter().map(|v| v.iter().copied().collect()).collect(),
                        closure_gap,
                        closes_antipodally: anti,
                        degeneracy,
                        length,
                    });
                }
            }
        }
        let pred = &z + &t * step;
        let next = correct_on_hyperplane(sys, &pred, &pred, &t, &opts).and_then(|r| {
            let tn = curve_tangent(sys, &r.z);
            let tn = if tn.dot(&t) < 0.0 { -tn } else { tn };
            let ok = tn.dot(&t) > 0.98 && (&r.z - &pred).norm() < 0.5 * step;
            ok.then_some((r.z, tn))
        });
        match next {
            Some((w, tn)) => {
                length += dist(l.x(z.as_slice()), l.x(w.as_slice()));
                travelled += (&w - &z).norm();
                z = w;
                t = tn;
                verts.push(z.clone());
                step = (step * 1.5).min(h);
            }
            None => {
                step *= 0.5;
                if step < hmin {
                    return Err(Error::Numerical(format!(
                        "continuation stalled at {:?}",
                        l.x(z.as_slice())
                    )));
                }
            }
        }
    }
    Err(Error::Numerical("singular curve did not close".into()))
}

// ---------------------------------------------------------------------------
// Cusps
// ---------------------------------------------------------------------------

/// Initial cusp-system variables from a point where the kernel Hessian is
/// nearly singular.
fn cusp_start(s: &MorinScenario, z: &DVector<f64>) -> Result<DVector<f64>> {
    let l = Layout::of(s);
    let (x, u, mu) = (l.x(z.as_slice()), l.u(z.as_slice()), l.mu(z.as_slice()));
    let kd = kernel_data(s, x, u, mu)?;
    let pairs = linalg::eigen_by_magnitude(&kd.kernel_hessian);
    let e = &kd.kernel * &pairs[0].1;
    let dg = s.manifold.dg_at(x);
    let df = s.df_at(x);
    // [Dg^T Df^T; 0 u^T] [rho; omega] = [H e; 0]
    let mut a = DMatrix::zeros(l.big_n + 1, l.c + l.n);
    a.view_mut((0, 0), (l.big_n, l.c))
        .copy_from(&dg.transpose());
    a.view_mut((0, l.c), (l.big_n, l.n))
        .copy_from(&df.transpose());
    for i in 0..l.n {
        a[(l.big_n, l.c + i)] = u[i];
    }
    let mut rhs = DVector::zeros(l.big_n + 1);
    rhs.rows_mut(0, l.big_n).copy_from(&(&kd.hessian * &e));
    let sol = linalg::lstsq(&a, &rhs).unwrap_or_else(|| DVector::zeros(l.c + l.n));
    let mut out = Vec::with_capacity(l.dim1() + l.big_n + 1 + l.c + l.n);
    out.extend(z.iter().copied());
    out.extend(e.iter().copied());
    out.push(0.0);
    out.extend(sol.iter().copied());
    Ok(DVector::from_vec(out))
}

/// Polishes a cusp candidate with the cusp system.
pub fn polish_cusp(
    s: &MorinScenario,
    cusp_sys: &PolySystem,
    z: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let w0 = cusp_start(s, z).ok()?;
    let r = solve::newton(
        |w| cusp_sys.eval(w.as_slice(), &[]),
        &w0,
        &s.tolerances.newton(),
    )?;
    let d1 = Layout::of(s).dim1();
    Some((r.z.rows(0, d1).into_owned(), r.residual))
}

/// Where on a segment of a traced curve the degeneracy changes sign, by
/// bisection along the chord with correction back onto the curve.
pub fn bisect_degeneracy(
    s: &MorinScenario,
    sys: &PolySystem,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    let l = Layout::of(s);
    let opts = s.tolerances.newton();
    let chord = b - a;
    let normal = chord.normalize();
    let point = |t: f64| -> Result<DVector<f64>> {
        let guess = a + &chord * t;
        correct_on_hyperplane(sys, &guess, &guess, &normal, &opts)
            .map(|r| r.z)
            .ok_or_else(|| Error::Numerical("corrector failed during cusp bisection".into()))
    };
    let det =
        |z: &DVector<f64>| degeneracy(s, l.x(z.as_slice()), l.u(z.as_slice()), l.mu(z.as_slice()));
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut dlo = det(a)?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let zm = point(mid)?;
        let dm = det(&zm)?;
        if dm == 0.0 {
            return Ok(zm);
        }
        if (dm > 0.0) == (dlo > 0.0) {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
        if (hi - lo) * chord.norm() < 1e-15 {
            break;
        }
    }
    point(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Stratification
// ---------------------------------------------------------------------------

/// A signed piece of a traced curve between consecutive cusps.
#[derive(Clone, Debug, Serialize)]
pub struct Arc {
    pub curve: usize,
    pub sign: Sign,
    /// Indices into [`Stratification::cusps`].
    pub start_cusp: usize,
    pub end_cusp: usize,
    pub vertices: usize,
}

/// A cusp-free closed curve.
#[derive(Clone, Debug, Serialize)]
pub struct Circle {
    pub curve: usize,
    pub sign: Sign,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StrataAudit {
    /// Smallest singular value of the singular-system Jacobian over sampled
    /// points (positive means the expected local dimension `n - 1`).
    pub min_jacobian_sigma: f64,
    /// Largest singular-system residual at a cusp.
    pub nesting_max_residual: f64,
    /// Cusps not bounding exactly one plus-arc end and one minus-arc end.
    pub boundary_violations: usize,
    pub max_closure_gap: f64,
    /// Largest distance between the bisection and cusp-system locations of
    /// a cusp.
    pub cusp_route_max_gap: f64,
    /// Points whose sign changed when recomputed with `u -> -u`.
    pub parity_flip_violations: usize,
    /// Points classified with depth above the verified range.
    pub unverified_depth: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stratification {
    pub n: usize,
    /// Depth-1 points: every singular point when `n = 1`, otherwise a
    /// sample cloud.
    pub fold_points: Vec<StratumPoint>,
    pub curves: Vec<TracedCurve>,
    pub cusps: Vec<StratumPoint>,
    pub arcs: Vec<Arc>,
    pub circles: Vec<Circle>,
    pub audit: StrataAudit,
}

impl Stratification {
    /// Points of `A_k` for a zero-dimensional stratum.
    pub fn count(&self, depth: usize, sign: Sign) -> usize {
        match depth {
            1 if self.n == 1 => self.fold_points.iter().filter(|p| p.sign == sign).count(),
            2 if self.n == 2 => self.cusps.len(),
            _ => 0,
        }
    }
}

fn sign_of(v: f64) -> Sign {
    if v > 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

fn split_curve(
    curve_idx: usize,
    curve: &TracedCurve,
    cusp_at: &[(usize, usize)],
) -> (Vec<Arc>, Option<Circle>) {
    // cusp_at: (segment index, cusp index), sorted by segment
    if cusp_at.is_empty() {
        let sign = sign_of(curve.degeneracy[0]);
        return (
            Vec::new(),
            Some(Circle {
                curve: curve_idx,
                sign,
            }),
        );
    }
    let nv = curve.vertices.len();
    let mut arcs = Vec::new();
    for w in 0..cusp_at.len() {
        let (seg_a, cusp_a) = cusp_at[w];
        let (seg_b, cusp_b) = cusp_at[(w + 1) % cusp_at.len()];
        // vertices strictly after seg_a up to seg_b (inclusive), cyclically
        let first = (seg_a + 1) % nv;
        let count = if cusp_at.len() == 1 {
            nv
        } else {
            (seg_b + nv - seg_a) % nv
        };
        let sign = sign_of(curve.degeneracy[first]);
        arcs.push(Arc {
            curve: curve_idx,
            sign,
            start_cusp: cusp_a,
            end_cusp: cusp_b,
            vertices: count,
        });
    }
    (arcs, None)
}

/// Computes the full stratification for a scenario.
pub fn stratify(s: &MorinScenario, root_seed: u64) -> Result<Stratification> {
    let l = Layout::of(s);
    let n = l.n;
    let sys = singular_system(s);
    let count = 200 * n;
    let cloud = singular_cloud(s, &sys, count, root_seed);
    if cloud.is_empty() {
        return Err(Error::Numerical(
            "no singular points found; a map from a compact manifold of higher dimension must have some".into(),
        ));
    }
    let mut audit = StrataAudit {
        min_jacobian_sigma: f64::INFINITY,
        ..Default::default()
    };
    for (z, _) in &cloud {
        let j = sys.jacobian(z.as_slice(), &[]);
        let sigma = linalg::singular_values(&j)[sys.neqs() - 1];
        audit.min_jacobian_sigma = audit.min_jacobian_sigma.min(sigma);
    }

    let mut fold_points = Vec::new();
    let mut extra_cusps = Vec::new();
    for (z, r) in &cloud {
        let p = classify_point(s, z, *r)?;
        // sign must not depend on the cokernel orientation
        let flipped = kernel_hessian(
            s,
            &p.x,
            &p.u.iter().map(|v| -v).collect::<Vec<_>>(),
            &p.mu.iter().map(|v| -v).collect::<Vec<_>>(),
        )?;
        if p.depth == 1 && sign_split(&flipped, 1) != p.sign {
            audit.parity_flip_violations += 1;
        }
        if !p.depth_verified {
            audit.unverified_depth += 1;
        }
        match p.depth {
            1 => fold_points.push(p),
            _ => extra_cusps.push(p),
        }
    }

    let mut curves = Vec::new();
    let mut cusps: Vec<StratumPoint> = Vec::new();
    let mut arcs = Vec::new();
    let mut circles = Vec::new();

    if n == 1 && !extra_cusps.is_empty() {
        return Err(Error::NotMorin(format!(
            "degenerate singular point at {:?} for a map to R^1",
            extra_cusps[0].x
        )));
    }

    if n == 2 {
        let h = s.tolerances.step;
        let cusp_sys = cusp_system(s);
        for (z, _) in &cloud {
            let x = l.x(z.as_slice());
            let covered = curves
                .iter()
                .any(|c: &TracedCurve| c.vertices.iter().any(|v| dist(&v[..l.big_n], x) < 2.0 * h));
            if covered {
                continue;
            }
            curves.push(trace_curve(s, &sys, z, h)?);
        }
        for (ci, curve) in curves.iter().enumerate() {
            audit.max_closure_gap = audit.max_closure_gap.max(curve.closure_gap);
            let nv = curve.vertices.len();
            let mut cusp_at = Vec::new();
            for i in 0..nv {
                let da = curve.degeneracy[i];
                let db = curve.degeneracy[(i + 1) % nv];
                if (da > 0.0) == (db > 0.0) {
                    continue;
                }
                let (a, b) = curve.segment(i, &l);
                let zb = bisect_degeneracy(s, &sys, &a, &b)?;
                let (zc, res) = polish_cusp(s, &cusp_sys, &zb).ok_or_else(|| {
                    Error::Numerical(format!("cusp system failed near {:?}", l.x(zb.as_slice())))
                })?;
                let gap = dist(l.x(zb.as_slice()), l.x(zc.as_slice()));
                audit.cusp_route_max_gap = audit.cusp_route_max_gap.max(gap);
                let p = classify_point(s, &zc, res)?;
                if p.depth != 2 {
                    return Err(Error::Numerical(format!(
                        "sign change of the kernel form at {:?} is not a cusp (depth {})",
                        p.x, p.depth
                    )));
                }
                let f1 = sys.residual(p.z().as_slice(), &[]);
                audit.nesting_max_residual = audit
                    .nesting_max_residual
                    .max(f1.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                cusp_at.push((i, cusps.len()));
                cusps.push(p);
            }
            let (a, c) = split_curve(ci, curve, &cusp_at);
            arcs.extend(a);
            circles.extend(c);
        }
        // cusps found in the cloud must lie on a traced curve
        for p in &extra_cusps {
            if !cusps
                .iter()
                .any(|c| dist(&c.x, &p.x) < 1e3 * s.tolerances.dedup)
            {
                return Err(Error::Numerical(format!(
                    "cusp {:?} found by sampling but not on any traced curve",
                    p.x
                )));
            }
        }
        // boundary audit: every cusp ends one plus arc and one minus arc
        for (k, _) in cusps.iter().enumerate() {
            let mut ends = Vec::new();
            for a in &arcs {
                if a.start_cusp == k {
                    ends.push(a.sign);
                }
                if a.end_cusp == k {
                    ends.push(a.sign);
                }
            }
            ends.sort();
            if ends != vec![Sign::Plus, Sign::Minus] {
                audit.boundary_violations += 1;
            }
        }
    } else if n >= 3 && (!extra_cusps.is_empty() || cusp_candidates_exist(s, &cloud)) {
        return Err(Error::Unsupported(format!(
                "the singular set of a map to R^{n} has points of depth >= 2; only fold-only maps are handled for n >= 3"
            )));
    }

    Ok(Stratification {
        n,
        fold_points,
        curves,
        cusps,
        arcs,
        circles,
        audit,
    })
}

/// Whether the cusp system converges anywhere near the sampled singular set.
fn cusp_candidates_exist(s: &MorinScenario, cloud: &[(DVector<f64>, f64)]) -> bool {
    let l = Layout::of(s);
    let cusp_sys = cusp_system(s);
    let mut ranked: Vec<(f64, &DVector<f64>)> = cloud
        .iter()
        .filter_map(|(z, _)| {
            kernel_hessian(s, l.x(z.as_slice()), l.u(z.as_slice()), l.mu(z.as_slice()))
                .ok()
                .map(|sig| (sig.min_rel, z))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let signs: std::collections::BTreeSet<bool> = cloud
        .iter()
        .filter_map(|(z, _)| {
            degeneracy(s, l.x(z.as_slice()), l.u(z.as_slice()), l.mu(z.as_slice())).ok()
        })
        .map(|d| d > 0.0)
        .collect();
    if signs.len() > 1 {
        return true;
    }
    ranked
        .iter()
        .take(20)
        .any(|(_, z)| polish_cusp(s, &cusp_sys, z).is_some())
}
