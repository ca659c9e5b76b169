//! Group detection: shape-misalignment regularized least squares solved by
//! linearized ADMM, followed by thresholding of normalized misalignments.

mod admm;
mod grouping;
mod misalign;
mod path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;
use crate::scalar::Scalar;

pub use admm::{admm_solve, admm_solve_from, b_update, AdmmState, LeastSquaresProblem, WarmStart};
pub use grouping::{dedup_partitions, partition_from_distances, threshold_grouping, GroupingStructure};
pub use misalign::{
    minor_indices, misalignment, misalignment_matrix, normalized_misalignment, pair_indices, MisalignmentSet,
};
pub use path::{default_lambda_grid, detect_path, detect_path_on, PathFit, PathPoint};

/// The `p x D` matrix of coefficient scores, one row per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientScores<T: Scalar = f64> {
    b: DMatrix<T>,
}

impl<T: Scalar> CoefficientScores<T> {
    pub fn new(b: DMatrix<T>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient score".into()));
        }
        Ok(Self { b })
    }

    pub fn zeros(p: usize, dim: usize) -> Self {
        Self { b: DMatrix::zeros(p, dim) }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged coefficient rows".into()));
        }
        Self::new(DMatrix::from_fn(p, dim, |j, d| rows[j][d]))
    }

    /// Rebuilds from the covariate-major flattening `j * D + d`.
    pub fn from_flat(flat: &DVector<T>, p: usize, dim: usize) -> Result<Self> {
        if flat.len() != p * dim {
            return Err(Error::DimensionMismatch(format!(
                "flat vector of length {} for {} x {} scores",
                flat.len(),
                p,
                dim
            )));
        }
        Self::new(DMatrix::from_fn(p, dim, |j, d| flat[j * dim + d]))
    }

    pub fn to_flat(&self) -> DVector<T> {
        let (p, dim) = self.b.shape();
        DVector::from_fn(p * dim, |k, _| self.b[(k / dim, k % dim)])
    }

    pub fn n_covariates(&self) -> usize {
        self.b.nrows()
    }

    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn row(&self, j: usize) -> Vec<T> {
        self.b.row(j).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n_covariates()).map(|j| self.row(j)).collect()
    }
}

/// Starting coefficients for the ADMM iterations.
#[derive(Debug, Clone, PartialEq)]
pub enum Init<T: Scalar = f64> {
    /// Least squares when `N > p·D`, otherwise ridge with
    /// `ε = 1e-4 · trace(Ξ'Ξ) / (p·D)`.
    Auto,
    Ols,
    Ridge(T),
    Given(CoefficientScores<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig<T: Scalar = f64> {
    pub penalty: PenaltySpec<T>,
    /// Augmented Lagrangian weight.
    pub theta: T,
    /// Threshold on normalized misalignment for grouping.
    pub tilde_lambda: T,
    pub max_iter: usize,
    pub tol_primal: T,
    pub tol_change: T,
    pub init: Init<T>,
    /// Carry coefficients and multipliers from one grid point to the next.
    pub warm_start: bool,
}

impl<T: Scalar> DetectConfig<T> {
    pub fn new(penalty: PenaltySpec<T>) -> Self {
        Self {
            penalty,
            theta: T::one(),
            tilde_lambda: T::lit(0.2),
            max_iter: 2000,
            tol_primal: T::lit(1e-6),
            tol_change: T::lit(1e-6),
            init: Init::Auto,
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.check_theta(self.theta)?;
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.tol_primal > T::zero() && self.tol_change > T::zero()) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.tilde_lambda >= T::zero()) {
            return Err(Error::Config("tilde_lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Convergence diagnostics reported with each detection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub change: f64,
    pub converged: bool,
}
