//! Pairwise shape misalignment: the 2x2 minors of two coefficient rows.

use nalgebra::DMatrix;

use crate::detect::CoefficientScores;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(d, d')` index pairs with `d < d'`, in lexicographic order.
pub fn minor_indices(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim * dim.saturating_sub(1) / 2);
    for d in 0..dim {
        for e in d + 1..dim {
            out.push((d, e));
        }
    }
    out
}

/// Covariate pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn pair_indices(p: usize) -> Vec<(usize, usize)> {
    minor_indices(p)
}

/// Entries `b_id b_jd' − b_jd b_id'` for all `d < d'`.
pub fn misalignment<T: Scalar>(bi: &[T], bj: &[T]) -> Result<Vec<T>> {
    if bi.len() != bj.len() {
        return Err(Error::DimensionMismatch(format!(
            "rows of length {} and {}",
            bi.len(),
            bj.len()
        )));
    }
    if bi.len() < 2 {
        return Err(Error::InvalidInput("misalignment needs D >= 2".into()));
    }
    Ok(minor_indices(bi.len())
        .into_iter()
        .map(|(d, e)| bi[d] * bj[e] - bj[d] * bi[e])
        .collect())
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt()
}

/// `‖M_ij‖ / (‖B_i‖ ‖B_j‖)`, which lies in `[0, 1]`.
///
/// A zero-norm argument yields [`Error::DegenerateRow`] with `row` 0 for the
/// first argument and 1 for the second.
pub fn normalized_misalignment<T: Scalar>(bi: &[T], bj: &[T]) -> Result<T> {
    let m = misalignment(bi, bj)?;
    let (ni, nj) = (norm(bi), norm(bj));
    if !(ni > T::zero()) {
        return Err(Error::DegenerateRow { row: 0 });
    }
    if !(nj > T::zero()) {
        return Err(Error::DegenerateRow { row: 1 });
    }
    Ok((norm(&m) / (ni * nj)).min(T::one()))
}

/// Symmetric `p x p` matrix of normalized misalignments with zero diagonal.
pub fn misalignment_matrix<T: Scalar>(b: &CoefficientScores<T>) -> Result<DMatrix<T>> {
    let p = b.n_covariates();
    let rows: Vec<Vec<T>> = (0..p).map(|j| b.row(j)).collect();
    if let Some(row) = rows.iter().position(|r| !(norm(r) > T::zero())) {
        return Err(Error::DegenerateRow { row });
    }
    let mut out = DMatrix::zeros(p, p);
    for (i, j) in pair_indices(p) {
        let v = normalized_misalignment(&rows[i], &rows[j])?;
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Misalignment vectors for every covariate pair `i < j`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct MisalignmentSet<T: Scalar = f64> {
    p: usize,
    dim: usize,
    values: Vec<T>,
    norms: Vec<T>,
}

impl<T: Scalar> MisalignmentSet<T> {
    pub fn zeros(p: usize, dim: usize) -> Self {
        let pairs = p * p.saturating_sub(1) / 2;
        let q = dim * dim.saturating_sub(1) / 2;
        Self {
            p,
            dim,
            values: vec![T::zero(); pairs * q],
            norms: vec![T::zero(); pairs],
        }
    }

    /// Misalignments implied by coefficient rows.
    pub fn from_scores(b: &CoefficientScores<T>) -> Self {
        let mut out = Self::zeros(b.n_covariates(), b.dim());
        out.values = wedge_flat(b);
        out.refresh_norms();
        out
    }

    pub(crate) fn from_flat(p: usize, dim: usize, values: Vec<T>) -> Self {
        let mut out = Self { p, dim, values, norms: Vec::new() };
        out.refresh_norms();
        out
    }

    pub(crate) fn refresh_norms(&mut self) {
        let q = self.minors_per_pair();
        self.norms = if q == 0 {
            vec![T::zero(); self.n_pairs()]
        } else {
            self.values.chunks(q).map(norm).collect()
        };
    }

    pub fn n_pairs(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn minors_per_pair(&self) -> usize {
        self.dim * self.dim.saturating_sub(1) / 2
    }

    /// Position of pair `(i, j)`, `i < j`, in the storage order.
    pub fn pair_position(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.p);
        i * self.p - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Vector for the pair `(i, j)`. For `i > j` this is the negated `(j, i)` vector.
    pub fn pair(&self, i: usize, j: usize) -> Vec<T> {
        let q = self.minors_per_pair();
        if i < j {
            let k = self.pair_position(i, j);
            self.values[k * q..(k + 1) * q].to_vec()
        } else {
            let k = self.pair_position(j, i);
            self.values[k * q..(k + 1) * q].iter().map(|v| -*v).collect()
        }
    }

    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    pub fn as_flat(&self) -> &[T] {
        &self.values
    }
}

/// All misalignments of `b`, pair-major then minor order.
pub(crate) fn wedge_flat<T: Scalar>(b: &CoefficientScores<T>) -> Vec<T> {
    let (p, dim) = (b.n_covariates(), b.dim());
    let minors = minor_indices(dim);
    let m = b.matrix();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2 * minors.len());
    for (i, j) in pair_indices(p) {
        for &(d, e) in &minors {
            out.push(m[(i, d)] * m[(j, e)] - m[(j, d)] * m[(i, e)]);
        }
    }
    out
}
