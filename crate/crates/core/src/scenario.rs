//! Scenario files: a manifold, a polynomial map to `R^n`, and verification
//! metadata, stored as JSON with prefix-notation expressions.
//!
//! ```json
//! {
//!   "name": "s2-height",
//!   "description": "height function on the round 2-sphere",
//!   "ambient_dim": 3,
//!   "constraints": ["(+ (^ x0 2) (^ x1 2) (^ x2 2) -1)"],
//!   "intrinsic_dim": 2,
//!   "target_dim": 1,
//!   "components": ["x2"],
//!   "chi_expected": 2
//! }
//! ```
//!
//! Optional fields: `sample_seeds` (points near `M`, sizes random sampling)
//! and `tolerances` (any subset of [`Tolerances`]).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expr::{CompiledPoly, Expr, Poly};
use crate::manifold::ImplicitManifold;
use crate::{Error, Point, Result, Tolerances};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub ambient_dim: usize,
    pub constraints: Vec<String>,
    pub intrinsic_dim: usize,
    pub target_dim: usize,
    pub components: Vec<String>,
    #[serde(default)]
    pub chi_expected: Option<i64>,
    #[serde(default)]
    pub sample_seeds: Vec<Point>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
}

/// A validated scenario with compiled derivatives of `f` and `g`.
#[derive(Clone, Debug)]
pub struct MorinScenario {
    pub name: String,
    pub description: String,
    pub manifold: ImplicitManifold,
    pub target_dim: usize,
    pub components: Vec<Expr>,
    pub tolerances: Tolerances,
    f_polys: Vec<Poly>,
    f: Vec<CompiledPoly<f64>>,
    df: Vec<Vec<CompiledPoly<f64>>>,
    hf: Vec<Vec<Vec<CompiledPoly<f64>>>>,
    hg: Vec<Vec<Vec<CompiledPoly<f64>>>>,
}

fn parse_all(what: &str, src: &[String]) -> Result<Vec<Expr>> {
    src.iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<Expr>()
                .map_err(|e| Error::Scenario(format!("{what}[{i}] `{s}`: {e}")))
        })
        .collect()
}

fn hessians(polys: &[Poly], n: usize) -> Vec<Vec<Vec<CompiledPoly<f64>>>> {
    polys
        .iter()
        .map(|p| {
            (0..n)
                .map(|i| {
                    let di = p.diff(i);
                    (0..n).map(|j| di.diff(j).compile()).collect()
                })
                .collect()
        })
        .collect()
}

impl MorinScenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let constraints = parse_all("constraints", &file.constraints)?;
        let components = parse_all("components", &file.components)?;
        let manifold = ImplicitManifold::new(
            file.name.clone(),
            file.ambient_dim,
            constraints,
            file.intrinsic_dim,
            file.chi_expected,
        )?
        .with_sample_seeds(file.sample_seeds);
        MorinScenario::new(
            file.name,
            file.description,
            manifold,
            components,
            file.tolerances.unwrap_or_default(),
        )
    }

    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        manifold: ImplicitManifold,
        components: Vec<Expr>,
        tolerances: Tolerances,
    ) -> Result<Self> {
        let n = components.len();
        let m = manifold.intrinsic_dim;
        if n == 0 {
            return Err(Error::Hypothesis(
                "target dimension n must be at least 1".into(),
            ));
        }
        if m <= n || (m - n).is_multiple_of(2) {
            return Err(Error::Hypothesis(format!(
                "m - n must be odd and positive (m = {m}, n = {n})"
            )));
        }
        let big_n = manifold.ambient_dim;
        if let Some(bad) = components.iter().find(|c| c.min_dim() > big_n) {
            return Err(Error::Scenario(format!(
                "component {bad} uses a variable beyond x{}",
                big_n - 1
            )));
        }
        let f_polys: Vec<Poly> = components.iter().map(Expr::to_poly).collect();
        let f = f_polys.iter().map(Poly::compile).collect();
        let df = f_polys
            .iter()
            .map(|p| (0..big_n).map(|j| p.diff(j).compile()).collect())
            .collect();
        let hf = hessians(&f_polys, big_n);
        let hg = hessians(manifold.constraint_polys(), big_n);
        Ok(MorinScenario {
            name: name.into(),
            description: description.into(),
            manifold,
            target_dim: n,
            components,
            tolerances,
            f_polys,
            f,
            df,
            hf,
            hg,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        MorinScenario::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        MorinScenario::from_json(&text)
    }

    /// `N`
    pub fn ambient_dim(&self) -> usize {
        self.manifold.ambient_dim
    }

    /// `m`
    pub fn source_dim(&self) -> usize {
        self.manifold.intrinsic_dim
    }

    /// Number of constraints `N - m`.
    pub fn codim(&self) -> usize {
        self.manifold.codim()
    }

    pub fn component_polys(&self) -> &[Poly] {
        &self.f_polys
    }

    pub fn f_at(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.f.len(), self.f.iter().map(|p| p.eval(x)))
    }

    /// `Df(x)` (`n x N`).
    pub fn df_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.target_dim, self.ambient_dim());
        for (i, row) in self.df.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                m[(i, j)] = p.eval(x);
            }
        }
        m
    }

    /// Ambient Hessian of `<w, f> - <nu, g>` at `x`.
    pub fn lagrangian_hessian(&self, x: &[f64], w: &[f64], nu: &[f64]) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let mut h = DMatrix::zeros(n, n);
        let mut acc = |blocks: &Vec<Vec<CompiledPoly<f64>>>, c: f64| {
            if c == 0.0 {
                return;
            }
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += c * blocks[i][j].eval(x);
                }
            }
        };
        for (b, &c) in self.hf.iter().zip(w) {
            acc(b, c);
        }
        for (b, &c) in self.hg.iter().zip(nu) {
            acc(b, -c);
        }
        h
    }
}

/// Scenario files shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    ("s2-height", include_str!("../scenarios/s2-height.json")),
    (
        "torus-height",
        include_str!("../scenarios/torus-height.json"),
    ),
    ("s4-height", include_str!("../scenarios/s4-height.json")),
    ("s3-proj", include_str!("../scenarios/s3-proj.json")),
    ("s3-cusps", include_str!("../scenarios/s3-cusps.json")),
    ("s3-bent", include_str!("../scenarios/s3-bent.json")),
    ("s4-proj", include_str!("../scenarios/s4-proj.json")),
];

pub fn bundled(name: &str) -> Option<MorinScenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| MorinScenario::from_json(text).expect("bundled scenarios parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_satisfy_hypotheses() {
        for (name, text) in BUNDLED {
            let s = MorinScenario::from_json(text).unwrap();
            assert_eq!(&s.name, name);
            assert_eq!((s.source_dim() - s.target_dim) % 2, 1);
        }
    }

    #[test]
    fn even_codimension_is_rejected() {
        let text = r#"{"name":"bad","ambient_dim":3,"constraints":["(+ (^ x0 2) (^ x1 2) (^ x2 2) -1)"],
            "intrinsic_dim":2,"target_dim":2,"components":["x0","x1"]}"#;
        let err = MorinScenario::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)));
        assert_eq!(err.exit_code(), 64);
    }

    #[test]
    fn malformed_expression_is_a_scenario_error() {
        let text = r#"{"name":"bad","ambient_dim":3,"constraints":["(+ x0"],
            "intrinsic_dim":2,"target_dim":1,"components":["x0"]}"#;
        assert!(matches!(
            MorinScenario::from_json(text),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn lagrangian_hessian_of_sphere_height() {
        let s = bundled("s2-height").unwrap();
        let h = s.lagrangian_hessian(&[0.0, 0.0, 1.0], &[1.0], &[0.5]);
        assert_eq!(
            h,
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0, -1.0]))
        );
    }
}
