//! Dense complex linear-algebra helpers shared by all modules.
//!
//! Everything here operates on `ndarray` arrays of `Complex64`. Dimensions
//! in this crate are small (d <= 32 for realistic nucleus counts), so plain
//! dense products are used throughout.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex square matrix acting on the radical-pair Hilbert space.
pub type Operator = Array2<C64>;

/// Complex amplitude vector.
pub type StateVector = Array1<C64>;

/// Identity matrix of dimension `d`.
pub fn identity(d: usize) -> Operator {
    Array2::eye(d)
}

/// Conjugate transpose.
pub fn dagger(a: &Operator) -> Operator {
    a.t().mapv(|z| z.conj())
}

/// Trace of a square matrix.
pub fn trace(a: &Operator) -> C64 {
    a.diag().sum()
}

/// Commutator [a, b] = ab - ba.
pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a.dot(b) - b.dot(a)
}

/// Symmetrize to the Hermitian part (a + a^dag) / 2.
pub fn hermitian_part(a: &Operator) -> Operator {
    let ad = dagger(a);
    (a + &ad).mapv(|z| z * 0.5)
}

/// Largest absolute deviation from Hermiticity, max |a_ij - conj(a_ji)|.
pub fn hermiticity_defect(a: &Operator) -> f64 {
    let ad = dagger(a);
    max_abs(&(a - &ad))
}

/// Largest element magnitude.
pub fn max_abs(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest element-wise difference |a - b|.
pub fn max_abs_diff(a: &Operator, b: &Operator) -> f64 {
    max_abs(&(a - b))
}

/// Eigendecomposition of a Hermitian matrix; returns ascending eigenvalues
/// and the matrix whose columns are the corresponding eigenvectors.
///
/// Some LAPACK binding versions hand back conjugated eigenvectors for
/// complex input (row-major buffers fed to a column-major backend), so the
/// residual of A v = w v is checked for both conventions and the one that
/// actually diagonalizes A is returned.
pub fn eigh_hermitian(a: &Operator) -> Result<(Array1<f64>, Operator)> {
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    let scaled = scale_columns(&vecs, &vals);
    let residual_plain = max_abs_diff(&a.dot(&vecs), &scaled);
    let conj = vecs.mapv(|z| z.conj());
    let scaled_conj = scale_columns(&conj, &vals);
    let residual_conj = max_abs_diff(&a.dot(&conj), &scaled_conj);
    if residual_conj < residual_plain {
        Ok((vals, conj))
    } else {
        Ok((vals, vecs))
    }
}

fn scale_columns(vecs: &Operator, vals: &Array1<f64>) -> Operator {
    let mut out = vecs.clone();
    for (j, lambda) in vals.iter().enumerate() {
        for i in 0..vecs.nrows() {
            out[[i, j]] *= *lambda;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &Operator) -> Result<Array1<f64>> {
    a.eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Linalg(e.to_string()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &Operator) -> Result<f64> {
    let vals = eigvalsh(a)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// exp(scale * a) for Hermitian `a` and complex `scale`, via eigendecomposition.
///
/// With `scale = -i dt` this yields the unitary time-step propagator.
pub fn exp_hermitian_scaled(a: &Operator, scale: C64) -> Result<Operator> {
    let (vals, vecs) = eigh_hermitian(a)?;
    let d = a.nrows();
    let mut scaled = vecs.clone();
    for (j, lambda) in vals.iter().enumerate() {
        let phase = (scale * lambda).exp();
        for i in 0..d {
            scaled[[i, j]] *= phase;
        }
    }
    Ok(scaled.dot(&dagger(&vecs)))
}

/// Check that every entry is finite.
pub fn all_finite(a: &Operator) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
