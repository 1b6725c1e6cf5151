use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::scalar::Scalar;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen<T: Scalar> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    pub fn new(matrix: DMatrix<T>) -> Self {
        assert!(
            matrix.is_square(),
            "eigendecomposition needs a square matrix"
        );
        let sym = (&matrix + matrix.transpose()) * T::lit(0.5);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = order.len();
        let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    /// Eigendecomposition of a positive semidefinite matrix; rounding noise below
    /// zero is clamped so the spectrum is nonnegative.
    pub fn psd(matrix: DMatrix<T>) -> Self {
        let mut out = Self::new(matrix);
        for v in out.values.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn largest(&self) -> T {
        self.values[0]
    }

    pub fn smallest(&self) -> T {
        self.values[self.dim() - 1]
    }

    /// Q f(Λ) Qᵀ.
    pub fn matrix_fn(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        scaled * self.vectors.transpose()
    }

    /// Q f(Λ) Qᵀ v without forming the matrix.
    pub fn apply_fn(&self, v: &DVector<T>, f: impl Fn(T) -> T) -> DVector<T> {
        let mut coeffs = self.vectors.tr_mul(v);
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c *= f(self.values[i]);
        }
        &self.vectors * coeffs
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        self.matrix_fn(|x| x)
    }
}

pub(crate) fn frobenius_sq<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

/// log Σ exp(xᵢ), stable against overflow.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b));
    if !max.is_finite() {
        return max;
    }
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}
