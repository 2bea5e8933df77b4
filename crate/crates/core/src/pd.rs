//! Step-size bookkeeping shared by the two primal-dual solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Configuration of a first-order primal-dual run.
///
/// `alpha` is the dual step, `beta` the primal step and `theta` the
/// over-relaxation of the dual extrapolation. Convergence requires
/// `alpha * beta * ||L||^2 < 1` for the linear operator `L` of the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub max_iter: usize,
    /// Stopping tolerance (meaning depends on the solver).
    pub tol: f64,
    /// Relative duality-gap tolerance; ignored by solvers without a gap.
    pub gap_tol: f64,
}

impl PdParams {
    /// Steps for an operator of norm `op_norm`: `alpha = ratio / K`,
    /// `beta = 1 / (alpha K^2)` with `K = op_norm * (1 + margin)`.
    ///
    /// The margin absorbs the fact that power iteration approaches the norm
    /// from below.
    pub fn from_norm(op_norm: f64, ratio: f64, settings: &SolverSettings) -> Result<Self> {
        if !(op_norm > 0.0 && ratio > 0.0) {
            return Err(Error::config(format!(
                "step rule needs a positive operator norm and ratio, got {op_norm} and {ratio}"
            )));
        }
        let k = op_norm * (1.0 + NORM_MARGIN);
        let alpha = ratio / k;
        let beta = 1.0 / (alpha * k * k);
        let params = PdParams {
            alpha,
            beta,
            theta: settings.theta,
            max_iter: settings.max_iter,
            tol: settings.tol,
            gap_tol: settings.gap_tol,
        };
        params.check(op_norm)?;
        Ok(params)
    }

    /// Enforce `alpha * beta * op_norm^2 < 1` and the basic ranges.
    pub fn check(&self, op_norm: f64) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::config("primal-dual steps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::config("iteration budget and tolerance must be positive"));
        }
        let product = self.alpha * self.beta * op_norm * op_norm;
        if product >= 1.0 {
            return Err(Error::config(format!(
                "step sizes violate alpha * beta * ||L||^2 < 1 (got {product})"
            )));
        }
        Ok(())
    }
}

/// Relative slack added to power-iteration norm estimates before choosing steps.
pub const NORM_MARGIN: f64 = 1e-2;

/// User-facing solver knobs, resolved into [`PdParams`] once the operator
/// norm of a concrete problem is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Ratio `alpha * K` between the dual step and `1 / K`.
    pub step_ratio: f64,
    pub theta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub gap_tol: f64,
}

impl SolverSettings {
    /// Defaults for the correction solver with the homogeneous cost.
    pub const CORRECTION: SolverSettings = SolverSettings {
        step_ratio: 0.3,
        theta: 1.0,
        max_iter: 50_000,
        tol: 1e-6,
        gap_tol: 1e-4,
    };

    /// Defaults for the correction solver with the quadratic cost.
    pub const CORRECTION_QUADRATIC: SolverSettings = SolverSettings {
        step_ratio: 0.1,
        ..Self::CORRECTION
    };

    /// Defaults for the eikonal solver.
    pub const EIKONAL: SolverSettings = SolverSettings {
        step_ratio: 25.0,
        theta: 1.0,
        max_iter: 20_000,
        tol: 1e-6,
        gap_tol: 1e-4,
    };
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::CORRECTION
    }
}
