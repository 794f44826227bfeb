//! Morin singular strata of polynomial maps `f: M -> R^n` on implicit compact
//! manifolds, Morse data of generic linear functionals on every stratum, and
//! machine checks of the signed Euler-characteristic identity
//!
//! ```text
//! chi(M) = sum over odd k of [ chi(closure A_k^+) - chi(closure A_k^-) ]
//! ```
//!
//! together with the mod-2 congruence, the fold-only equality and the
//! supporting index and sign checks.
//!
//! Pipeline: [`scenario`] parses a JSON scenario, [`strata`] locates the
//! singular set and classifies its points, [`morse`] finds critical points of
//! `L_a o f` on every stratum, and [`euler`] assembles the two independent
//! routes to each Euler characteristic.
//!
//! Symbolic algebra ([`expr`]) is exact and generic over the evaluation ring
//! ([`expr::Ring`]: `f32`, `f64`, [`Rational`], Taylor polynomials). The
//! numerical pipeline runs in `f64`.

pub mod cli;
pub mod euler;
pub mod expr;
pub mod jet;
pub mod linalg;
pub mod manifold;
pub mod morse;
pub mod scenario;
pub mod seed;
pub mod solve;
pub mod strata;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{Expr, ExprError, Poly, Ring};
pub use manifold::{ImplicitManifold, TangentFrame};
pub use scenario::MorinScenario;

/// Exact coefficients of symbolic expressions.
pub type Rational = num_rational::BigRational;
/// Scalar of the numerical pipeline.
pub type Real = f64;
/// A point in ambient coordinates.
pub type Point = Vec<Real>;
pub type Vector = nalgebra::DVector<Real>;
pub type Matrix = nalgebra::DMatrix<Real>;

/// Numerical thresholds of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Newton convergence on `max |F|`.
    pub residual: f64,
    /// Points closer than this (ambient norm) are the same point.
    pub dedup: f64,
    /// Relative eigenvalue threshold for "zero".
    pub eigen_zero: f64,
    /// Relative gradient threshold separating correct from non-correct
    /// boundary critical points.
    pub correctness: f64,
    /// Angular tolerance (radians) for parallel gradients.
    pub angle: f64,
    /// Continuation step along singular curves.
    pub step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-12,
            dedup: 1e-6,
            eigen_zero: 1e-6,
            correctness: 1e-8,
            angle: 1e-4,
            step: 1e-2,
        }
    }
}

impl Tolerances {
    pub fn newton(&self) -> solve::NewtonOptions {
        solve::NewtonOptions {
            tol: self.residual,
            accept: self.residual * 1e3,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(
        "constraint Jacobian is rank deficient at {point:?} (smallest singular value {sigma:.3e})"
    )]
    Regularity { point: Point, sigma: f64 },
    #[error("projection onto the manifold failed from {start:?} (last residual {residual:.3e})")]
    Projection { start: Point, residual: f64 },
    #[error("map is not Morin: {0}")]
    NotMorin(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    /// `failures` lists, per attempt, the audit items that rejected the
    /// covector.
    #[error(
        "no generic covector found after {attempts} attempts ({} audit failure(s), last: {})",
        .failures.len(),
        .failures.last().map_or("none", String::as_str)
    )]
    GenericityExhausted {
        attempts: usize,
        failures: Vec<String>,
    },
    #[error("numerical inconsistency: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Expr(_) | Error::Scenario(_) | Error::Hypothesis(_) => 64,
            Error::Regularity { .. } | Error::Projection { .. } => 65,
            Error::NotMorin(_) | Error::Unsupported(_) => 66,
            Error::GenericityExhausted { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Io(_) => 74,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
