//! Discretized functional covariates, orthonormal bases and projection scores.
//!
//! Curves are stored on a single shared grid in `[0, 1]`. Inner products use
//! the trapezoid rule on that grid, so a basis is "orthonormal" when its Gram
//! matrix under those weights is the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::trapezoid_weights;
use crate::scalar::Scalar;

/// Entrywise tolerance for the Gram-matrix orthonormality check.
pub const TOL_ORTH: f64 = 1e-6;

/// `N` samples of `p` functional covariates on a shared grid plus responses.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet<T: Scalar = f64> {
    grid: Vec<T>,
    /// Row-major `N x p x T`, index `(n * p + j) * T + i`.
    values: Vec<T>,
    responses: Vec<T>,
    n_samples: usize,
    n_covariates: usize,
    names: Option<Vec<String>>,
}

impl<T: Scalar> CurveSet<T> {
    pub fn new(
        grid: Vec<T>,
        values: Vec<T>,
        responses: Vec<T>,
        n_covariates: usize,
    ) -> Result<Self> {
        validate_grid(&grid)?;
        let n_samples = responses.len();
        if n_covariates == 0 {
            return Err(Error::InvalidInput("at least one covariate is required".into()));
        }
        if values.len() != n_samples * n_covariates * grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} x {} x {} curve values, got {}",
                n_samples,
                n_covariates,
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().chain(responses.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at flat index {bad}")));
        }
        Ok(Self {
            grid,
            values,
            responses,
            n_samples,
            n_covariates,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_covariates {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} covariates",
                names.len(),
                self.n_covariates
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn responses(&self) -> &[T] {
        &self.responses
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// Evaluations of covariate `j` for sample `n`.
    pub fn curve(&self, n: usize, j: usize) -> &[T] {
        let len = self.grid.len();
        let start = (n * self.n_covariates + j) * len;
        &self.values[start..start + len]
    }

    /// Multiplies every curve of covariate `j` by `c`.
    pub fn scale_covariate(&mut self, j: usize, c: T) {
        let len = self.grid.len();
        for n in 0..self.n_samples {
            let start = (n * self.n_covariates + j) * len;
            for v in &mut self.values[start..start + len] {
                *v *= c;
            }
        }
    }
}

fn validate_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < T::zero() || *t > T::one()) {
        return Err(Error::InvalidInput("grid points must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Uniform grid of `len` points covering `[0, 1]`.
pub fn uniform_grid<T: Scalar>(len: usize) -> Vec<T> {
    let denom = T::from_usize_lossy(len.saturating_sub(1).max(1));
    (0..len).map(|i| T::from_usize_lossy(i) / denom).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    Eigen,
}

/// `D` orthonormal functions evaluated on a grid, with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem<T: Scalar = f64> {
    kind: BasisKind,
    grid: Vec<T>,
    /// `D x T`.
    eval: DMatrix<T>,
    weights: Vec<T>,
    /// Eigenvalues of the pooled covariance operator, eigenbasis only.
    eigenvalues: Option<Vec<T>>,
}

impl<T: Scalar> BasisSystem<T> {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.eval.nrows()
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Basis values, one row per function.
    pub fn eval(&self) -> &DMatrix<T> {
        &self.eval
    }

    pub fn eigenvalues(&self) -> Option<&[T]> {
        self.eigenvalues.as_deref()
    }

    /// Gram matrix of the basis under the quadrature rule.
    pub fn gram(&self) -> DMatrix<T> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |a, b| {
            (0..self.grid.len())
                .map(|i| self.weights[i] * self.eval[(a, i)] * self.eval[(b, i)])
                .fold(T::zero(), |s, v| s + v)
        })
    }

    /// Largest entrywise deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> T {
        let g = self.gram();
        let mut worst = T::zero();
        for a in 0..g.nrows() {
            for b in 0..g.ncols() {
                let target = if a == b { T::one() } else { T::zero() };
                worst = worst.max((g[(a, b)] - target).abs());
            }
        }
        worst
    }
}

/// Value of the `index`-th (0-based) orthonormal Fourier function at `t`,
/// ordered `1, √2 sin 2πt, √2 cos 2πt, √2 sin 4πt, ...`.
pub fn fourier_value<T: Scalar>(index: usize, t: T) -> T {
    if index == 0 {
        return T::one();
    }
    let freq = T::from_usize_lossy(index.div_ceil(2));
    let arg = T::two_pi() * freq * t;
    let root2 = T::lit(2.0).sqrt();
    if index % 2 == 1 {
        root2 * arg.sin()
    } else {
        root2 * arg.cos()
    }
}

/// First `d` orthonormal Fourier functions on `grid`.
///
/// Fails when the grid does not support an orthonormal system to within
/// [`TOL_ORTH`], e.g. a grid that does not span a full period.
pub fn build_fourier_basis<T: Scalar>(d: usize, grid: &[T]) -> Result<BasisSystem<T>> {
    if d == 0 {
        return Err(Error::InvalidInput("basis dimension must be positive".into()));
    }
    validate_grid(grid)?;
    let eval = DMatrix::from_fn(d, grid.len(), |k, i| fourier_value(k, grid[i]));
    let basis = BasisSystem {
        kind: BasisKind::Fourier,
        grid: grid.to_vec(),
        eval,
        weights: trapezoid_weights(grid),
        eigenvalues: None,
    };
    let err = basis.orthonormality_error();
    if err > T::lit(TOL_ORTH) {
        return Err(Error::InvalidInput(format!(
            "Fourier system is not orthonormal on this grid (Gram error {err:e})"
        )));
    }
    Ok(basis)
}

/// Smallest `D` whose cumulative eigenvalue fraction reaches `threshold`.
///
/// Eigenvalues must be sorted in decreasing order; negative values (numerical
/// noise of a PSD operator) are ignored.
pub fn select_dimension<T: Scalar>(eigenvalues: &[T], threshold: T) -> Result<usize> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(Error::InvalidInput("variance threshold must lie in (0, 1]".into()));
    }
    let positive: Vec<T> = eigenvalues.iter().map(|v| v.max(T::zero())).collect();
    let total = positive.iter().fold(T::zero(), |s, v| s + *v);
    if !(total > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    // Slack so that a fraction that is exactly the threshold in decimal still counts.
    let slack = T::lit(1e-10);
    let mut acc = T::zero();
    for (k, v) in positive.iter().enumerate() {
        acc += *v;
        if acc / total >= threshold - slack {
            return Ok(k + 1);
        }
    }
    Ok(positive.iter().rposition(|v| *v > T::zero()).map_or(1, |k| k + 1))
}

/// Pooled eigenbasis of all `N * p` curves.
///
/// Curves are centered by their pooled mean, the covariance surface is
/// eigendecomposed under the trapezoid rule, and the leading eigenfunctions
/// reaching `var_threshold` of the total variance are returned with unit
/// norm. Each eigenfunction's largest-magnitude value is made positive.
pub fn build_eigenbasis<T: Scalar>(
    curves: &CurveSet<T>,
    var_threshold: T,
) -> Result<(BasisSystem<T>, usize)> {
    let m = curves.n_samples() * curves.n_covariates();
    if m < 2 {
        return Err(Error::InvalidInput("eigenbasis needs at least two pooled curves".into()));
    }
    let grid = curves.grid();
    let len = grid.len();
    let weights = trapezoid_weights(grid);

    let mut mean = vec![T::zero(); len];
    for n in 0..curves.n_samples() {
        for j in 0..curves.n_covariates() {
            for (acc, v) in mean.iter_mut().zip(curves.curve(n, j)) {
                *acc += *v;
            }
        }
    }
    let inv_m = T::one() / T::from_usize_lossy(m);
    mean.iter_mut().for_each(|v| *v *= inv_m);

    // Centered curves scaled by sqrt(w): the symmetric operator is W^1/2 C W^1/2.
    let sqrt_w: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    let mut centered = DMatrix::<T>::zeros(m, len);
    for n in 0..curves.n_samples() {
        for j in 0..curves.n_covariates() {
            let row = n * curves.n_covariates() + j;
            for (i, v) in curves.curve(n, j).iter().enumerate() {
                centered[(row, i)] = (*v - mean[i]) * sqrt_w[i];
            }
        }
    }
    let scale = T::one() / T::from_usize_lossy(m - 1);
    let op = centered.tr_mul(&centered) * scale;
    let eig = op.symmetric_eigen();

    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<T> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let total = values.iter().fold(T::zero(), |s, v| s + v.max(T::zero()));
    let magnitude = centered.iter().fold(T::zero(), |s, v| s + *v * *v);
    if !(total > T::zero()) || !(magnitude > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let d = select_dimension(&values, var_threshold)?;

    let mut eval = DMatrix::<T>::zeros(d, len);
    for (row, &k) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut pivot = T::zero();
        for i in 0..len {
            if v[i].abs() > pivot.abs() {
                pivot = v[i];
            }
        }
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        for i in 0..len {
            eval[(row, i)] = sign * v[i] / sqrt_w[i];
        }
    }
    let basis = BasisSystem {
        kind: BasisKind::Eigen,
        grid: grid.to_vec(),
        eval,
        weights,
        eigenvalues: Some(values),
    };
    Ok((basis, d))
}

/// Projection scores `ξ[n, j, d]`, stored as the flattened `N x (p·D)` design
/// with covariate-major columns (`j * D + d`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T: Scalar = f64> {
    design: DMatrix<T>,
    n_covariates: usize,
    dim: usize,
}

impl<T: Scalar> ScoreMatrix<T> {
    /// Wraps a flattened design with `p * d` columns.
    pub fn from_design(design: DMatrix<T>, n_covariates: usize, dim: usize) -> Result<Self> {
        if n_covariates == 0 || dim == 0 {
            return Err(Error::InvalidInput("score dimensions must be positive".into()));
        }
        if design.ncols() != n_covariates * dim {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, expected {} x {}",
                design.ncols(),
                n_covariates,
                dim
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(Self { design, n_covariates, dim })
    }

    pub fn zeros(n_samples: usize, n_covariates: usize, dim: usize) -> Self {
        Self {
            design: DMatrix::zeros(n_samples, n_covariates * dim),
            n_covariates,
            dim,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn column(j: usize, d: usize, dim: usize) -> usize {
        j * dim + d
    }

    #[inline]
    pub fn get(&self, n: usize, j: usize, d: usize) -> T {
        self.design[(n, j * self.dim + d)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, j: usize, d: usize, v: T) {
        self.design[(n, j * self.dim + d)] = v;
    }

    /// The flattened `N x (p·D)` design.
    pub fn design(&self) -> &DMatrix<T> {
        &self.design
    }

    /// Scores of sample `n`, covariate `j`.
    pub fn block(&self, n: usize, j: usize) -> DVector<T> {
        DVector::from_fn(self.dim, |d, _| self.get(n, j, d))
    }

    /// Rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            design: self.design.select_rows(idx),
            n_covariates: self.n_covariates,
            dim: self.dim,
        }
    }

    /// Multiplies the score block of covariate `j` by `c`.
    pub fn scale_covariate(&mut self, j: usize, c: T) {
        for d in 0..self.dim {
            let col = j * self.dim + d;
            for v in self.design.column_mut(col).iter_mut() {
                *v *= c;
            }
        }
    }
}

fn check_same_grid<T: Scalar>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "grid lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let tol = T::lit(1e-12);
    if a.iter().zip(b).any(|(x, y)| (*x - *y).abs() > tol) {
        return Err(Error::DimensionMismatch("curve and basis grids differ".into()));
    }
    Ok(())
}

/// Quadrature inner products of every curve with every basis function.
pub fn project_scores<T: Scalar>(
    curves: &CurveSet<T>,
    basis: &BasisSystem<T>,
) -> Result<ScoreMatrix<T>> {
    check_same_grid(curves.grid(), basis.grid())?;
    let dim = basis.dim();
    // Weighted basis, T x D.
    let weighted = DMatrix::from_fn(basis.grid.len(), dim, |i, d| basis.eval[(d, i)] * basis.weights[i]);
    let mut scores = ScoreMatrix::zeros(curves.n_samples(), curves.n_covariates(), dim);
    for n in 0..curves.n_samples() {
        for j in 0..curves.n_covariates() {
            let x = curves.curve(n, j);
            for d in 0..dim {
                let s = x
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (i, v)| acc + *v * weighted[(i, d)]);
                scores.set(n, j, d, s);
            }
        }
    }
    Ok(scores)
}

/// Evaluates `Σ_d coeffs[d] ν_d` on the basis grid.
pub fn reconstruct_function<T: Scalar>(coeffs: &[T], basis: &BasisSystem<T>) -> Result<Vec<T>> {
    if coeffs.len() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis of dimension {}",
            coeffs.len(),
            basis.dim()
        )));
    }
    Ok((0..basis.grid.len())
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (d, c)| acc + *c * basis.eval[(d, i)])
        })
        .collect())
}

/// Builds curves from scores: `X[n, j](t) = Σ_d ξ[n, j, d] ν_d(t)`.
pub fn synthesize_curves<T: Scalar>(
    scores: &ScoreMatrix<T>,
    basis: &BasisSystem<T>,
    responses: Vec<T>,
) -> Result<CurveSet<T>> {
    if scores.dim() != basis.dim() {
        return Err(Error::DimensionMismatch("score and basis dimensions differ".into()));
    }
    let len = basis.grid.len();
    let p = scores.n_covariates();
    let mut values = Vec::with_capacity(scores.n_samples() * p * len);
    for n in 0..scores.n_samples() {
        for j in 0..p {
            for i in 0..len {
                let mut v = T::zero();
                for d in 0..scores.dim() {
                    v += scores.get(n, j, d) * basis.eval[(d, i)];
                }
                values.push(v);
            }
        }
    }
    CurveSet::new(basis.grid.clone(), values, responses, p)
}
