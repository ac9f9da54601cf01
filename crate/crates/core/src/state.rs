//! Validated quantum-state types.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, Operator, StateVector};

/// Hermiticity tolerance for density-matrix validation.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalues may undershoot zero by at most this much.
pub const EIGENVALUE_TOL: f64 = 1e-9;
/// Trace may exceed 1 by at most this much.
pub const TRACE_TOL: f64 = 1e-10;
/// Pure-state norm tolerance.
pub const NORM_TOL: f64 = 1e-10;

/// A density matrix: Hermitian, positive semidefinite (within tolerance),
/// with trace in (0, 1]. Recombining dynamics shrink the trace below 1,
/// so sub-normalized matrices are valid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Operator,
}

impl DensityMatrix {
    /// Validate and wrap a matrix.
    pub fn new(entries: Operator) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let defect = linalg::hermiticity_defect(&entries);
        if defect > HERMITICITY_TOL {
            return Err(Error::NotHermitian { max_dev: defect });
        }
        let tr = linalg::trace(&entries).re;
        if !(tr > 0.0 && tr <= 1.0 + TRACE_TOL) {
            return Err(Error::InvalidTrace { trace: tr });
        }
        let min_eig = linalg::min_eigenvalue(&linalg::hermitian_part(&entries))?;
        if min_eig < -EIGENVALUE_TOL {
            return Err(Error::NotPositive {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { entries })
    }

    /// Wrap without validation; for matrices that are valid by construction.
    pub fn from_array_unchecked(entries: Operator) -> Self {
        Self { entries }
    }

    pub fn array(&self) -> &Operator {
        &self.entries
    }

    pub fn into_array(self) -> Operator {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries).re
    }
}

/// A unit-norm pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: StateVector,
}

impl PureState {
    /// Validate and wrap an amplitude vector (norm must be 1 within 1e-10).
    pub fn new(amplitudes: StateVector) -> Result<Self> {
        let norm = vector_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    /// Normalize a nonzero vector and wrap it.
    pub fn normalized(amplitudes: StateVector) -> Result<Self> {
        let norm = vector_norm(&amplitudes);
        if norm < 1e-150 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: amplitudes.mapv(|z| z / norm),
        })
    }

    pub fn amplitudes(&self) -> &StateVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Expectation value <psi| op |psi> (real part).
    pub fn expectation(&self, op: &Operator) -> f64 {
        expectation(&self.amplitudes, op)
    }

    /// The projector |psi><psi|.
    pub fn density(&self) -> DensityMatrix {
        let n = self.amplitudes.len();
        let arr = Operator::from_shape_fn((n, n), |(i, j)| {
            self.amplitudes[i] * self.amplitudes[j].conj()
        });
        DensityMatrix::from_array_unchecked(arr)
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut StateVector {
        &mut self.amplitudes
    }
}

pub(crate) fn vector_norm(v: &StateVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn expectation(v: &StateVector, op: &Operator) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (i, vi) in v.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for (j, vj) in v.iter().enumerate() {
            row += op[[i, j]] * vj;
        }
        acc += vi.conj() * row;
    }
    acc.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{singlet_initial_density, singlet_projector, SpinSystem};
    use ndarray::{array, Array1};

    #[test]
    fn valid_density_accepted() {
        let sys = SpinSystem::one_nucleus();
        let rho = singlet_initial_density(&sys);
        assert!(DensityMatrix::new(rho.array().clone()).is_ok());
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut arr = singlet_initial_density(&SpinSystem::bare()).into_array();
        arr[[0, 1]] = C64::new(0.5, 0.0);
        assert!(matches!(
            DensityMatrix::new(arr),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let arr = array![
            [C64::new(0.6, 0.0), C64::new(0.5, 0.0)],
            [C64::new(0.5, 0.0), C64::new(0.2, 0.0)]
        ];
        assert!(matches!(
            DensityMatrix::new(arr),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn zero_trace_rejected() {
        let arr = Operator::zeros((4, 4));
        assert!(matches!(
            DensityMatrix::new(arr),
            Err(Error::InvalidTrace { .. })
        ));
    }

    #[test]
    fn pure_state_norm_enforced() {
        let v = Array1::from(vec![C64::new(0.6, 0.0), C64::new(0.8, 0.0)]);
        assert!(PureState::new(v.clone()).is_ok());
        let w = v.mapv(|z| z * 2.0);
        assert!(PureState::new(w.clone()).is_err());
        let normalized = PureState::normalized(w).unwrap();
        assert!((vector_norm(normalized.amplitudes()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn expectation_matches_density_trace() {
        let sys = SpinSystem::one_nucleus();
        let qs = singlet_projector(&sys);
        let psi = PureState::normalized(Array1::from_iter(
            (0..8).map(|k| C64::new(1.0 + k as f64, 0.3 * k as f64)),
        ))
        .unwrap();
        let via_density = linalg::trace(&psi.density().array().dot(&qs)).re;
        assert!((psi.expectation(&qs) - via_density).abs() < 1e-12);
    }
}
