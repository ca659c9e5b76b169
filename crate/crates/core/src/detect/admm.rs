//! Linearized ADMM for least squares with a concave penalty on every pairwise
//! shape misalignment.
//!
//! The misalignments enter as the bilinear equality constraints
//! `M_ij = wedge(B_i, B_j)`. Each sweep runs a proximal update of `M`, a
//! coefficient update in which the constraint map is replaced by its first
//! order expansion around the previous coefficients, and a multiplier ascent
//! step.

use nalgebra::{DMatrix, DVector};

use crate::detect::misalign::{minor_indices, pair_indices, wedge_flat, MisalignmentSet};
use crate::detect::{CoefficientScores, DetectConfig, Diagnostics, Init};
use crate::error::{Error, Result};
use crate::funcdata::ScoreMatrix;
use crate::linalg::{max_abs, solve_spd};
use crate::scalar::Scalar;

/// Sufficient statistics `Ξ'Ξ`, `Ξ'y` of the least-squares loss `½‖y − ΞB‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProblem<T: Scalar = f64> {
    xtx: DMatrix<T>,
    xty: DVector<T>,
    n_samples: usize,
    p: usize,
    dim: usize,
}

impl<T: Scalar> LeastSquaresProblem<T> {
    /// Uses the design and response as given.
    pub fn from_design(design: &DMatrix<T>, y: &[T], p: usize, dim: usize) -> Result<Self> {
        if design.ncols() != p * dim {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, expected {}",
                design.ncols(),
                p * dim
            )));
        }
        if design.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, response has {}",
                design.nrows(),
                y.len()
            )));
        }
        if design.nrows() == 0 {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let y = DVector::from_column_slice(y);
        Ok(Self {
            xtx: design.tr_mul(design),
            xty: design.tr_mul(&y),
            n_samples: design.nrows(),
            p,
            dim,
        })
    }

    /// Centers the response and every score column first, which profiles out
    /// an unpenalized intercept.
    pub fn centered(scores: &ScoreMatrix<T>, y: &[T]) -> Result<Self> {
        let n = scores.n_samples();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("{} scores rows, {} responses", n, y.len())));
        }
        if n == 0 {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut design = scores.design().clone();
        for mut col in design.column_iter_mut() {
            let mean = col.sum() * inv_n;
            col.add_scalar_mut(-mean);
        }
        let y_mean = y.iter().fold(T::zero(), |s, v| s + *v) * inv_n;
        let yc: Vec<T> = y.iter().map(|v| *v - y_mean).collect();
        Self::from_design(&design, &yc, scores.n_covariates(), scores.dim())
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.xtx
    }

    pub fn xty(&self) -> &DVector<T> {
        &self.xty
    }

    /// Least-squares coefficients, jittered if the Gram matrix is singular.
    pub fn ols(&self) -> Result<CoefficientScores<T>> {
        let sol = solve_spd(&self.xtx, &self.xty)?;
        CoefficientScores::from_flat(&sol.x, self.p, self.dim)
    }

    pub fn ridge(&self, eps: T) -> Result<CoefficientScores<T>> {
        let mut h = self.xtx.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += eps;
        }
        let sol = solve_spd(&h, &self.xty)?;
        CoefficientScores::from_flat(&sol.x, self.p, self.dim)
    }

    fn initial(&self, init: &Init<T>) -> Result<CoefficientScores<T>> {
        let pd = self.p * self.dim;
        match init {
            Init::Auto if self.n_samples > pd => self.ols(),
            Init::Auto => {
                let eps = T::lit(1e-4) * self.xtx.trace() / T::from_usize_lossy(pd);
                self.ridge(eps)
            }
            Init::Ols => self.ols(),
            Init::Ridge(eps) => self.ridge(*eps),
            Init::Given(b) => {
                if b.n_covariates() != self.p || b.dim() != self.dim {
                    return Err(Error::DimensionMismatch("initial coefficients have the wrong shape".into()));
                }
                Ok(b.clone())
            }
        }
    }
}

/// Coefficient update: exact minimizer of the linearized augmented Lagrangian
///
/// `½‖y − ΞB‖² + uᵀF̃(B) + (θ/2)‖F̃(B)‖²`, with
/// `F̃(B) = wedge(B⁰) − M + J(B⁰)(B − B⁰)` and `J` the constraint Jacobian.
///
/// `u` is ordered like the misalignment storage (pair-major, minor-minor).
pub fn b_update<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    m: &MisalignmentSet<T>,
    u: &[T],
    b_prev: &CoefficientScores<T>,
    theta: T,
) -> Result<CoefficientScores<T>> {
    let (p, dim) = (problem.p, problem.dim);
    if b_prev.n_covariates() != p || b_prev.dim() != dim {
        return Err(Error::DimensionMismatch("coefficients do not match the problem".into()));
    }
    if m.as_flat().len() != u.len() || m.n_pairs() != p * p.saturating_sub(1) / 2 {
        return Err(Error::DimensionMismatch("misalignments and multipliers do not match".into()));
    }
    let minors = minor_indices(dim);
    let b = b_prev.matrix();
    let mut h = problem.xtx.clone();
    let mut rhs = problem.xty.clone();
    let mf = m.as_flat();

    let mut r = 0;
    for (i, j) in pair_indices(p) {
        for &(d, e) in &minors {
            let cols = [i * dim + d, j * dim + e, j * dim + d, i * dim + e];
            let grad = [b[(j, e)], b[(i, d)], -b[(i, e)], -b[(j, d)]];
            let wedge = b[(i, d)] * b[(j, e)] - b[(j, d)] * b[(i, e)];
            let jb = grad[0] * b[(i, d)] + grad[1] * b[(j, e)] + grad[2] * b[(j, d)] + grad[3] * b[(i, e)];
            // Coefficient of Jᵀ in the right-hand side.
            let v = u[r] + theta * (wedge - mf[r] - jb);
            for a in 0..4 {
                rhs[cols[a]] -= grad[a] * v;
                for c in 0..4 {
                    h[(cols[a], cols[c])] += theta * grad[a] * grad[c];
                }
            }
            r += 1;
        }
    }
    let sol = solve_spd(&h, &rhs)?;
    CoefficientScores::from_flat(&sol.x, p, dim)
}

/// Coefficients and multipliers to resume from.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T: Scalar = f64> {
    pub b: CoefficientScores<T>,
    pub u: Vec<T>,
}

/// Final iterate of a linearized ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T: Scalar = f64> {
    pub b: CoefficientScores<T>,
    pub m: MisalignmentSet<T>,
    pub u: Vec<T>,
    pub iterations: usize,
    /// `‖wedge(B) − M‖∞` at the last iterate.
    pub primal_residual: T,
    /// `‖B − B_prev‖∞` at the last iterate.
    pub change: T,
    pub converged: bool,
}

impl<T: Scalar> AdmmState<T> {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            iterations: self.iterations,
            primal_residual: self.primal_residual.as_f64(),
            change: self.change.as_f64(),
            converged: self.converged,
        }
    }

    pub fn warm_start(&self) -> WarmStart<T> {
        WarmStart { b: self.b.clone(), u: self.u.clone() }
    }
}

/// Runs linearized ADMM from the configured initialization.
pub fn admm_solve<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    config: &DetectConfig<T>,
) -> Result<(CoefficientScores<T>, AdmmState<T>)> {
    admm_solve_from(problem, config, None)
}

/// Runs linearized ADMM, optionally resuming from `warm` (which overrides `config.init`).
pub fn admm_solve_from<T: Scalar>(
    problem: &LeastSquaresProblem<T>,
    config: &DetectConfig<T>,
    warm: Option<&WarmStart<T>>,
) -> Result<(CoefficientScores<T>, AdmmState<T>)> {
    config.validate()?;
    let (p, dim) = (problem.p, problem.dim);
    let q = dim * dim.saturating_sub(1) / 2;
    let n_constraints = p * p.saturating_sub(1) / 2 * q;

    let (mut b, mut u) = match warm {
        Some(w) => {
            if w.b.n_covariates() != p || w.b.dim() != dim || w.u.len() != n_constraints {
                return Err(Error::DimensionMismatch("warm start does not match the problem".into()));
            }
            (w.b.clone(), w.u.clone())
        }
        None => (problem.initial(&config.init)?, vec![T::zero(); n_constraints]),
    };

    let theta = config.theta;
    let inv_theta = T::one() / theta;
    let penalty = config.penalty;
    let mut a = vec![T::zero(); n_constraints];
    let mut m_flat = vec![T::zero(); n_constraints];
    let mut primal = T::zero();
    let mut change = T::zero();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        iterations = it;
        let wedge = wedge_flat(&b);
        for ((av, w), uv) in a.iter_mut().zip(&wedge).zip(&u) {
            *av = *w + *uv * inv_theta;
        }
        if q > 0 {
            for (src, dst) in a.chunks(q).zip(m_flat.chunks_mut(q)) {
                penalty.prox_into(src, theta, dst);
            }
        }
        let m = MisalignmentSet::from_flat(p, dim, m_flat.clone());

        let b_new = b_update(problem, &m, &u, &b, theta).map_err(|e| Error::SolverFailure {
            iteration: it,
            reason: e.to_string(),
        })?;
        let wedge_new = wedge_flat(&b_new);
        primal = T::zero();
        for ((uv, w), mv) in u.iter_mut().zip(&wedge_new).zip(&m_flat) {
            let resid = *w - *mv;
            *uv += theta * resid;
            primal = primal.max(resid.abs());
        }
        change = max_abs(b_new.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| *x - *y));
        b = b_new;

        if !(primal.is_finite() && change.is_finite()) || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure {
                iteration: it,
                reason: "non-finite iterate".into(),
            });
        }
        if primal <= config.tol_primal && change <= config.tol_change {
            converged = true;
            break;
        }
    }

    let state = AdmmState {
        b: b.clone(),
        m: MisalignmentSet::from_flat(p, dim, m_flat),
        u,
        iterations,
        primal_residual: primal,
        change,
        converged,
    };
    Ok((b, state))
}
