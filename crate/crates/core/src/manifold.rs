//! Compact manifolds presented implicitly as regular level sets
//! `M = { x in R^N : g(x) = 0 }`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::expr::{CompiledPoly, Expr, Poly};
use crate::linalg;
use crate::seed::{self, Stream};
use crate::solve::{self, NewtonOptions};
use crate::{Error, Point, Result};

/// Smallest constraint-Jacobian singular value accepted as full rank.
pub const REGULARITY_SIGMA: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct ImplicitManifold {
    pub name: String,
    pub ambient_dim: usize,
    pub constraints: Vec<Expr>,
    pub intrinsic_dim: usize,
    /// Points near `M`, used to size random sampling.
    pub sample_seeds: Vec<Point>,
    pub chi_expected: Option<i64>,
    polys: Vec<Poly>,
    g: Vec<CompiledPoly<f64>>,
    dg: Vec<Vec<CompiledPoly<f64>>>,
}

/// Orthonormal tangent and normal bases at a point of `M`.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub base: Point,
    /// `N x m`, columns orthonormal.
    pub tangent: DMatrix<f64>,
    /// `N x (N - m)`, columns orthonormal.
    pub normal: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub points_checked: usize,
    pub min_singular_value: f64,
    pub worst_point: Point,
    /// Largest ambient norm among sampled points (a compactness spot check).
    pub max_radius: f64,
}

impl ImplicitManifold {
    pub fn new(
        name: impl Into<String>,
        ambient_dim: usize,
        constraints: Vec<Expr>,
        intrinsic_dim: usize,
        chi_expected: Option<i64>,
    ) -> Result<Self> {
        if intrinsic_dim == 0 || ambient_dim <= intrinsic_dim {
            return Err(Error::Scenario(format!(
                "need N > m >= 1, got N = {ambient_dim}, m = {intrinsic_dim}"
            )));
        }
        if constraints.len() != ambient_dim - intrinsic_dim {
            return Err(Error::Scenario(format!(
                "{} constraints cannot cut an {intrinsic_dim}-manifold out of R^{ambient_dim}",
                constraints.len()
            )));
        }
        if let Some(bad) = constraints.iter().find(|c| c.min_dim() > ambient_dim) {
            return Err(Error::Scenario(format!(
                "constraint {bad} uses a variable beyond x{}",
                ambient_dim - 1
            )));
        }
        let polys: Vec<Poly> = constraints.iter().map(Expr::to_poly).collect();
        let g = polys.iter().map(Poly::compile).collect();
        let dg = polys
            .iter()
            .map(|p| (0..ambient_dim).map(|j| p.diff(j).compile()).collect())
            .collect();
        Ok(ImplicitManifold {
            name: name.into(),
            ambient_dim,
            constraints,
            intrinsic_dim,
            sample_seeds: Vec::new(),
            chi_expected,
            polys,
            g,
            dg,
        })
    }

    pub fn with_sample_seeds(mut self, seeds: Vec<Point>) -> Self {
        self.sample_seeds = seeds;
        self
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim - self.intrinsic_dim
    }

    pub fn constraint_polys(&self) -> &[Poly] {
        &self.polys
    }

    pub fn g_at(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.g.len(), self.g.iter().map(|p| p.eval(x)))
    }

    /// Constraint Jacobian `Dg(x)` (`(N - m) x N`).
    pub fn dg_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.codim(), self.ambient_dim);
        for (i, row) in self.dg.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                m[(i, j)] = p.eval(x);
            }
        }
        m
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.g_at(x).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Gauss–Newton projection with minimum-norm steps.
    pub fn project(&self, x0: &[f64], opts: &NewtonOptions) -> Result<Point> {
        let z0 = DVector::from_column_slice(x0);
        let eval = |z: &DVector<f64>| (self.g_at(z.as_slice()), self.dg_at(z.as_slice()));
        let opts = NewtonOptions {
            max_iter: opts.max_iter.max(100),
            ..*opts
        };
        solve::newton(eval, &z0, &opts)
            .map(|r| r.z.as_slice().to_vec())
            .ok_or_else(|| Error::Projection {
                start: x0.to_vec(),
                residual: self.residual(x0),
            })
    }

    pub fn tangent_frame(&self, p: &[f64]) -> Result<TangentFrame> {
        let dg = self.dg_at(p);
        let sigma = linalg::singular_values(&dg).last().copied().unwrap_or(0.0);
        if sigma < REGULARITY_SIGMA {
            return Err(Error::Regularity {
                point: p.to_vec(),
                sigma,
            });
        }
        let rows: Vec<DVector<f64>> = (0..dg.nrows()).map(|i| dg.row(i).transpose()).collect();
        let normal = linalg::gram_schmidt(&rows, 1e-12);
        let tangent = linalg::complement(&rows, self.ambient_dim);
        Ok(TangentFrame {
            base: p.to_vec(),
            tangent: linalg::columns(&tangent, self.ambient_dim),
            normal: linalg::columns(&normal, self.ambient_dim),
        })
    }

    /// Standard deviation of the ambient Gaussian used for random samples.
    fn sample_scale(&self) -> f64 {
        self.sample_seeds
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(1.0, f64::max)
    }

    /// `count` random points on `M` drawn from `rng`. Failed projections are
    /// redrawn (at most `20 * count` attempts in total).
    pub fn random_points<R: Rng>(
        &self,
        count: usize,
        rng: &mut R,
        opts: &NewtonOptions,
    ) -> Vec<Point> {
        let scale = self.sample_scale();
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < 20 * count.max(1) {
            attempts += 1;
            let x: Point = (0..self.ambient_dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if let Ok(p) = self.project(&x, opts) {
                out.push(p);
            }
        }
        out
    }

    pub fn validate_regularity(&self, count: usize, root_seed: u64) -> Result<RegularityReport> {
        if count == 0 {
            return Err(Error::Scenario("regularity audit needs count >= 1".into()));
        }
        let opts = NewtonOptions::default();
        let mut rng = seed::rng(root_seed, Stream::Regularity, 0);
        let scale = self.sample_scale();
        let mut report = RegularityReport {
            points_checked: 0,
            min_singular_value: f64::INFINITY,
            worst_point: Vec::new(),
            max_radius: 0.0,
        };
        for _ in 0..count {
            let x: Point = (0..self.ambient_dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let p = self.project(&x, &opts)?;
            let sigma = linalg::singular_values(&self.dg_at(&p))
                .last()
                .copied()
                .unwrap_or(0.0);
            if sigma < REGULARITY_SIGMA {
                return Err(Error::Regularity { point: p, sigma });
            }
            report.points_checked += 1;
            report.max_radius = report
                .max_radius
                .max(p.iter().map(|v| v * v).sum::<f64>().sqrt());
            if sigma < report.min_singular_value {
                report.min_singular_value = sigma;
                report.worst_point = p;
            }
        }
        Ok(report)
    }
}

/// Named manifolds with known Euler characteristic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StandardManifold {
    /// Unit `S^m` in `R^{m+1}`.
    Sphere(usize),
    /// Torus of revolution with radii 2 and 1 in `R^3`.
    Torus,
    /// `S^a x S^b` in `R^{a+1} x R^{b+1}`.
    SphereProduct(usize, usize),
}

impl StandardManifold {
    pub fn from_name(name: &str, params: &[usize]) -> Result<Self> {
        match (name, params) {
            ("sphere", [m]) if *m >= 1 => Ok(StandardManifold::Sphere(*m)),
            ("torus", []) => Ok(StandardManifold::Torus),
            ("sphere-product", [a, b]) if *a >= 1 && *b >= 1 => {
                Ok(StandardManifold::SphereProduct(*a, *b))
            }
            _ => Err(Error::Scenario(format!(
                "unknown standard manifold {name}{params:?} (known: sphere(m), torus, sphere-product(a,b))"
            ))),
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        let sphere = |m: usize| if m.is_multiple_of(2) { 2 } else { 0 };
        match *self {
            StandardManifold::Sphere(m) => sphere(m),
            StandardManifold::Torus => 0,
            StandardManifold::SphereProduct(a, b) => sphere(a) * sphere(b),
        }
    }

    pub fn build(&self) -> ImplicitManifold {
        let sum_sq = |vars: std::ops::Range<usize>| {
            let mut terms: Vec<Expr> = vars.map(|i| Expr::var(i).pow(2)).collect();
            terms.push(Expr::int(-1));
            Expr::Add(terms)
        };
        let (name, n, constraints, m, seeds) = match *self {
            StandardManifold::Sphere(m) => (
                format!("sphere({m})"),
                m + 1,
                vec![sum_sq(0..m + 1)],
                m,
                Vec::new(),
            ),
            StandardManifold::Torus => {
                // (x^2 + y^2 + z^2 + 3)^2 - 16 (x^2 + y^2)
                let r2 = Expr::Add(vec![
                    Expr::var(0).pow(2),
                    Expr::var(1).pow(2),
                    Expr::var(2).pow(2),
                    Expr::int(3),
                ]);
                let rho2 = Expr::Add(vec![Expr::var(0).pow(2), Expr::var(1).pow(2)]);
                let g = r2.pow(2) - Expr::int(16) * rho2;
                (
                    "torus".to_string(),
                    3,
                    vec![g.normalize()],
                    2,
                    vec![vec![3.0, 0.0, 0.0]],
                )
            }
            StandardManifold::SphereProduct(a, b) => (
                format!("sphere-product({a},{b})"),
                a + b + 2,
                vec![sum_sq(0..a + 1), sum_sq(a + 1..a + b + 2)],
                a + b,
                vec![{
                    let mut p = vec![0.0; a + b + 2];
                    p[0] = 1.0;
                    p[a + 1] = 1.0;
                    p
                }],
            ),
        };
        ImplicitManifold::new(name, n, constraints, m, Some(self.euler_characteristic()))
            .expect("standard manifolds are well formed")
            .with_sample_seeds(seeds)
    }
}

/// Builds a named standard manifold.
pub fn standard_manifold(name: &str, params: &[usize]) -> Result<ImplicitManifold> {
    Ok(StandardManifold::from_name(name, params)?.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts() -> NewtonOptions {
        NewtonOptions::default()
    }

    #[test]
    fn sphere_regularity_reports_gradient_norm_two() {
        let s2 = standard_manifold("sphere", &[2]).unwrap();
        let rep = s2.validate_regularity(50, 1).unwrap();
        assert_eq!(rep.points_checked, 50);
        assert_relative_eq!(rep.min_singular_value, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn torus_regularity_passes() {
        let t = standard_manifold("torus", &[]).unwrap();
        let rep = t.validate_regularity(50, 2).unwrap();
        // |grad g| = 8 r sqrt((r^2 + 3 - 8)^2 ... ) is bounded below on the torus
        assert!(rep.min_singular_value > 1.0);
        assert!(rep.max_radius <= 3.0 + 1e-9);
    }

    #[test]
    fn double_root_constraint_fails_regularity() {
        let m =
            ImplicitManifold::new("double", 2, vec!["(^ x0 2)".parse().unwrap()], 1, None).unwrap();
        match m.validate_regularity(5, 0) {
            Err(Error::Regularity { point, sigma }) => {
                assert!(point[0].abs() < 1e-5);
                assert!(sigma < REGULARITY_SIGMA);
            }
            other => panic!("expected regularity failure, got {other:?}"),
        }
    }

    #[test]
    fn projection_examples() {
        let s2 = standard_manifold("sphere", &[2]).unwrap();
        let p = s2.project(&[0.0, 0.0, 2.0], &opts()).unwrap();
        assert_relative_eq!(p.as_slice(), [0.0, 0.0, 1.0].as_slice(), epsilon = 1e-12);
        let p = s2.project(&[3.0, 4.0, 0.0], &opts()).unwrap();
        assert_relative_eq!(p.as_slice(), [0.6, 0.8, 0.0].as_slice(), epsilon = 1e-12);
        let t = standard_manifold("torus", &[]).unwrap();
        let p = t.project(&[2.5, 0.3, 0.4], &opts()).unwrap();
        assert!(t.residual(&p) <= 1e-12);
        let again = t.project(&p, &opts()).unwrap();
        let moved: f64 = p
            .iter()
            .zip(&again)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(moved < 1e-12);
    }

    #[test]
    fn frames_at_poles() {
        let s2 = standard_manifold("sphere", &[2]).unwrap();
        let f = s2.tangent_frame(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.tangent.ncols(), 2);
        for j in 0..2 {
            assert!(f.tangent[(2, j)].abs() < 1e-15);
        }
        assert_relative_eq!(f.normal[(2, 0)].abs(), 1.0);
        let s3 = standard_manifold("sphere", &[3]).unwrap();
        let f = s3.tangent_frame(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.tangent.ncols(), 3);
        assert!(f.tangent.row(0).norm() < 1e-15);
    }

    #[test]
    fn torus_frame_is_orthonormal_and_tangent() {
        let t = standard_manifold("torus", &[]).unwrap();
        let p = t.project(&[1.0, 2.0, 0.7], &opts()).unwrap();
        let f = t.tangent_frame(&p).unwrap();
        let dg = t.dg_at(&p);
        assert!((&dg * &f.tangent).norm() / dg.norm() <= 1e-10);
        let all = nalgebra::DMatrix::from_columns(
            &f.tangent
                .column_iter()
                .chain(f.normal.column_iter())
                .collect::<Vec<_>>(),
        );
        assert!((all.transpose() * &all - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn euler_metadata() {
        assert_eq!(
            standard_manifold("sphere", &[2]).unwrap().chi_expected,
            Some(2)
        );
        assert_eq!(
            standard_manifold("sphere", &[3]).unwrap().chi_expected,
            Some(0)
        );
        assert_eq!(
            standard_manifold("torus", &[]).unwrap().chi_expected,
            Some(0)
        );
        assert_eq!(
            standard_manifold("sphere-product", &[2, 2])
                .unwrap()
                .chi_expected,
            Some(4)
        );
        assert!(standard_manifold("klein", &[]).is_err());
    }
}
