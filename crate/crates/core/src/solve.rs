//! Polynomial systems compiled for fast floating evaluation, and a damped
//! Newton / Gauss–Newton solver.

use nalgebra::{DMatrix, DVector};

use crate::expr::{CompiledPoly, Poly};
use crate::linalg;

/// A system `F(z; p) = 0` of polynomials in unknowns `z` (variables
/// `0..nvars`) and fixed parameters `p` (variables `nvars..nvars+nparams`).
#[derive(Clone, Debug)]
pub struct PolySystem {
    nvars: usize,
    nparams: usize,
    eqs: Vec<Poly>,
    f: Vec<CompiledPoly<f64>>,
    jac: Vec<Vec<(usize, CompiledPoly<f64>)>>,
}

impl PolySystem {
    pub fn new(eqs: Vec<Poly>, nvars: usize, nparams: usize) -> Self {
        let f = eqs.iter().map(Poly::compile).collect();
        let jac = eqs
            .iter()
            .map(|e| {
                (0..nvars)
                    .filter_map(|j| {
                        let d = e.diff(j);
                        (!d.is_zero()).then(|| (j, d.compile()))
                    })
                    .collect()
            })
            .collect();
        PolySystem {
            nvars,
            nparams,
            eqs,
            f,
            jac,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn nparams(&self) -> usize {
        self.nparams
    }

    pub fn neqs(&self) -> usize {
        self.eqs.len()
    }

    pub fn equations(&self) -> &[Poly] {
        &self.eqs
    }

    fn full(&self, z: &[f64], params: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.nvars);
        debug_assert_eq!(params.len(), self.nparams);
        let mut v = Vec::with_capacity(self.nvars + self.nparams);
        v.extend_from_slice(z);
        v.extend_from_slice(params);
        v
    }

    pub fn residual(&self, z: &[f64], params: &[f64]) -> DVector<f64> {
        let v = self.full(z, params);
        DVector::from_iterator(self.f.len(), self.f.iter().map(|p| p.eval(&v)))
    }

    pub fn jacobian(&self, z: &[f64], params: &[f64]) -> DMatrix<f64> {
        let v = self.full(z, params);
        let mut m = DMatrix::zeros(self.f.len(), self.nvars);
        for (i, row) in self.jac.iter().enumerate() {
            for (j, p) in row {
                m[(i, *j)] = p.eval(&v);
            }
        }
        m
    }

    pub fn eval(&self, z: &[f64], params: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        (self.residual(z, params), self.jacobian(z, params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Converged once `max |F| <= tol`.
    pub tol: f64,
    /// Accept a stalled iterate whose residual is below this.
    pub accept: f64,
    pub max_iter: usize,
    /// Abort when an iterate leaves this ball.
    pub max_norm: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            accept: 1e-9,
            max_iter: 60,
            max_norm: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub z: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on a square system, Gauss–Newton with minimum-norm steps on
/// a non-square one. `eval` returns `(F(z), DF(z))`.
pub fn newton<E>(eval: E, z0: &DVector<f64>, opts: &NewtonOptions) -> Option<NewtonResult>
where
    E: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut z = z0.clone();
    let (mut f, mut j) = eval(&z);
    let mut r = inf_norm(&f);
    if !r.is_finite() {
        return None;
    }
    for it in 0..opts.max_iter {
        if r <= opts.tol {
            return Some(NewtonResult {
                z,
                residual: r,
                iterations: it,
            });
        }
        let rhs = -&f;
        let step = if j.is_square() {
            j.clone()
                .lu()
                .solve(&rhs)
                .or_else(|| linalg::lstsq(&j, &rhs))
        } else {
            linalg::lstsq(&j, &rhs)
        }?;
        if !step.iter().all(|s| s.is_finite()) {
            return None;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = &z + &step * alpha;
            let (ft, jt) = eval(&trial);
            let rt = inf_norm(&ft);
            if rt.is_finite() && rt < r {
                z = trial;
                f = ft;
                j = jt;
                r = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (r <= opts.accept).then_some(NewtonResult {
                z,
                residual: r,
                iterations: it,
            });
        }
        if z.norm() > opts.max_norm {
            return None;
        }
    }
    (r <= opts.accept).then_some(NewtonResult {
        z,
        residual: r,
        iterations: opts.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn poly(s: &str) -> Poly {
        s.parse::<Expr>().unwrap().to_poly()
    }

    #[test]
    fn solves_circle_line_intersection() {
        let sys = PolySystem::new(
            vec![poly("(+ (^ x0 2) (^ x1 2) -1)"), poly("(- x0 x1)")],
            2,
            0,
        );
        let z0 = DVector::from_vec(vec![1.0, 0.5]);
        let r = newton(
            |z| sys.eval(z.as_slice(), &[]),
            &z0,
            &NewtonOptions::default(),
        )
        .unwrap();
        let h = 0.5f64.sqrt();
        assert!((r.z[0] - h).abs() < 1e-12 && (r.z[1] - h).abs() < 1e-12);
    }

    #[test]
    fn parameters_are_not_unknowns() {
        // x0 - p = 0 with p = 3 as the parameter variable x1
        let sys = PolySystem::new(vec![poly("(- x0 x1)")], 1, 1);
        assert_eq!(sys.jacobian(&[0.0], &[3.0]).shape(), (1, 1));
        let r = newton(
            |z| sys.eval(z.as_slice(), &[3.0]),
            &DVector::from_vec(vec![0.0]),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!((r.z[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_newton_projects_onto_underdetermined_set() {
        let sys = PolySystem::new(vec![poly("(+ (^ x0 2) (^ x1 2) (^ x2 2) -1)")], 3, 0);
        let r = newton(
            |z| sys.eval(z.as_slice(), &[]),
            &DVector::from_vec(vec![0.0, 0.0, 2.0]),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!((r.z[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_failure_without_real_roots() {
        let sys = PolySystem::new(vec![poly("(+ (^ x0 2) 1)")], 1, 0);
        assert!(newton(
            |z| sys.eval(z.as_slice(), &[]),
            &DVector::from_vec(vec![0.3]),
            &NewtonOptions::default()
        )
        .is_none());
    }
}
