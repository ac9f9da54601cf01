//! The singlet-triplet coherence calculus.
//!
//! A density matrix splits into four blocks with respect to the singlet and
//! triplet projectors, rho_xy = Q_x rho Q_y. The diagonal blocks form the
//! incoherent part; the S-T coherence lives in rho_ST and rho_TS and is
//! quantified by summing the magnitudes of the amplitudes that couple the
//! singlet to each individual triplet state:
//!
//!   C(rho) = sum_{j=0,+,-} sqrt( Tr( rho_ST P_Tj rho_TS ) )
//!
//! C scales linearly with the off-diagonal blocks, which is what permits
//! writing any rho as a mixture of a maximally coherent and a maximally
//! incoherent state with weights p_coh and 1 - p_coh. The older quadratic
//! measure Tr(rho_ST rho_TS) / (Tr rho_SS Tr rho_TT) is kept only for
//! comparison; a projective dephasing channel that shrinks the off-diagonal
//! blocks by lambda shrinks it by lambda^2 instead of lambda.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, Operator};
use crate::spin::SpinOps;
use crate::state::DensityMatrix;

/// Radicands of C(rho) may undershoot zero by at most this much before the
/// computation is declared inconsistent.
pub const RADICAND_TOL: f64 = 1e-14;

/// p_coh below this is treated as exactly zero when distilling rho_coh.
pub const PCOH_EPSILON: f64 = 1e-12;

/// Default threshold under which the coherence normalization constant is
/// considered degenerate (no coherence ever generated).
pub const CMAX_EPSILON: f64 = 1e-12;

/// The four singlet/triplet blocks of a density matrix.
#[derive(Debug, Clone)]
pub struct Partition {
    pub ss: Operator,
    pub tt: Operator,
    pub st: Operator,
    pub ts: Operator,
}

impl Partition {
    /// Sum of the four blocks; reconstructs the original matrix.
    pub fn reconstruct(&self) -> Operator {
        &self.ss + &self.tt + &self.st + &self.ts
    }

    /// The incoherent part rho_SS + rho_TT.
    pub fn incoherent(&self) -> Operator {
        &self.ss + &self.tt
    }

    /// The coherent part rho_ST + rho_TS.
    pub fn coherent(&self) -> Operator {
        &self.st + &self.ts
    }
}

/// Split a matrix into its singlet/triplet blocks rho_xy = Q_x rho Q_y.
pub fn partition(rho: &Operator, ops: &SpinOps) -> Result<Partition> {
    ops.check_dim(rho)?;
    Ok(partition_unchecked(rho, ops))
}

pub(crate) fn partition_unchecked(rho: &Operator, ops: &SpinOps) -> Partition {
    let qs_rho = ops.q_s.dot(rho);
    let qt_rho = ops.q_t.dot(rho);
    Partition {
        ss: qs_rho.dot(&ops.q_s),
        st: qs_rho.dot(&ops.q_t),
        ts: qt_rho.dot(&ops.q_s),
        tt: qt_rho.dot(&ops.q_t),
    }
}

/// The linear S-T coherence measure C(rho).
pub fn coherence_c(rho: &Operator, ops: &SpinOps) -> Result<f64> {
    ops.check_dim(rho)?;
    let part = partition_unchecked(rho, ops);
    coherence_c_of_blocks(&part, ops)
}

pub(crate) fn coherence_c_of_blocks(part: &Partition, ops: &SpinOps) -> Result<f64> {
    let mut total = 0.0;
    for p_t in &ops.p_t {
        let radicand = linalg::trace(&part.st.dot(p_t).dot(&part.ts)).re;
        if radicand < -RADICAND_TOL {
            return Err(Error::NegativeRadicand(radicand));
        }
        total += radicand.max(0.0).sqrt();
    }
    Ok(total)
}

/// The legacy quadratic measure Tr(rho_ST rho_TS) / (Tr rho_SS Tr rho_TT).
///
/// Undefined when either diagonal block is empty.
pub fn pcoh_old(rho: &Operator, ops: &SpinOps) -> Result<f64> {
    ops.check_dim(rho)?;
    let part = partition_unchecked(rho, ops);
    let tr_ss = linalg::trace(&part.ss).re;
    let tr_tt = linalg::trace(&part.tt).re;
    if tr_ss <= 0.0 || tr_tt <= 0.0 {
        return Err(Error::UndefinedMeasure);
    }
    let num = linalg::trace(&part.st.dot(&part.ts)).re;
    Ok(num / (tr_ss * tr_tt))
}

/// Normalization context for the coherence probability: the maximum C
/// reached under purely unitary evolution, and the threshold below which
/// that maximum counts as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceContext {
    pub c_max: f64,
    pub epsilon_cmax: f64,
}

impl CoherenceContext {
    pub fn new(c_max: f64) -> Self {
        Self {
            c_max,
            epsilon_cmax: CMAX_EPSILON,
        }
    }

    /// True when the normalization constant is too small to divide by;
    /// p_coh is then defined as zero.
    pub fn is_degenerate(&self) -> bool {
        self.c_max < self.epsilon_cmax
    }
}

/// Evolve rho_0 unitarily under `h` on the fixed grid t = 0, dt, ..., t_end
/// and return the maximum of C over the grid as a `CoherenceContext`.
///
/// The window and step should match the production run the context will
/// normalize; the result is cached and shared read-only.
pub fn max_unitary_coherence(
    h: &Operator,
    rho0: &DensityMatrix,
    t_end: f64,
    dt: f64,
    ops: &SpinOps,
) -> Result<CoherenceContext> {
    if !(dt > 0.0) {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            constraint: "must be > 0",
        });
    }
    if t_end < dt {
        return Err(Error::OutOfRange {
            name: "t_end",
            value: t_end,
            constraint: "must be >= dt",
        });
    }
    ops.check_dim(rho0.array())?;
    ops.check_dim(h)?;
    let u = linalg::exp_hermitian_scaled(h, C64::new(0.0, -dt))?;
    let u_dag = linalg::dagger(&u);
    let steps = (t_end / dt).round() as usize;
    let mut rho = rho0.array().clone();
    let mut c_max = coherence_c(&rho, ops)?;
    for _ in 0..steps {
        rho = u.dot(&rho).dot(&u_dag);
        let c = coherence_c(&rho, ops)?;
        if c > c_max {
            c_max = c;
        }
    }
    Ok(CoherenceContext::new(c_max))
}

/// The coherence probability p_coh = C(rho) / (Tr rho * c_max), clamped to
/// [0, 1]. Returns 0 for a degenerate context.
pub fn pcoh_new(rho: &Operator, ctx: &CoherenceContext, ops: &SpinOps) -> Result<f64> {
    Ok(pcoh_new_unclamped(rho, ctx, ops)?.clamp(0.0, 1.0))
}

/// As [`pcoh_new`] but without the clamp; used to count clamp events in
/// integrator diagnostics.
pub fn pcoh_new_unclamped(rho: &Operator, ctx: &CoherenceContext, ops: &SpinOps) -> Result<f64> {
    let tr = linalg::trace(rho).re;
    if tr <= 0.0 {
        return Err(Error::InvalidTrace { trace: tr });
    }
    if ctx.is_degenerate() {
        return Ok(0.0);
    }
    Ok(coherence_c(rho, ops)? / (tr * ctx.c_max))
}

/// The maximally coherent state obtained by scaling the off-diagonal blocks
/// of rho by 1/p: rho_coh = rho_SS + rho_TT + (rho_ST + rho_TS)/p.
///
/// Fails for p at or below the singularity guard; integrators never call
/// this (the master-equation term carries the product p * rho_coh, which
/// stays finite as p -> 0). The result is Hermitian with the trace of rho
/// but is a formal mixture component: amplifying the off-diagonal blocks
/// can push eigenvalues slightly negative (e.g. for unequal-amplitude pure
/// superpositions), so no positivity check is applied.
pub fn rho_coh(rho: &DensityMatrix, p: f64, ops: &SpinOps) -> Result<DensityMatrix> {
    if p <= PCOH_EPSILON {
        return Err(Error::SingularDecomposition(p));
    }
    ops.check_dim(rho.array())?;
    let part = partition_unchecked(rho.array(), ops);
    let arr = part.incoherent() + part.coherent().mapv(|z| z / p);
    Ok(DensityMatrix::from_array_unchecked(arr))
}

/// The maximally incoherent state rho_SS + rho_TT.
pub fn rho_incoh(rho: &DensityMatrix, ops: &SpinOps) -> Result<DensityMatrix> {
    ops.check_dim(rho.array())?;
    let part = partition_unchecked(rho.array(), ops);
    Ok(DensityMatrix::from_array_unchecked(part.incoherent()))
}

/// Projective S-T dephasing channel with Kraus operators
/// K1 = sqrt(1-lambda) Q_S, K2 = sqrt(1-lambda) Q_T, K3 = sqrt(lambda) 1.
///
/// Leaves the diagonal blocks untouched and multiplies the off-diagonal
/// blocks by `lambda` (lambda = 1 is the identity channel, lambda = 0 is
/// complete dephasing).
pub fn kraus_dephase(rho: &DensityMatrix, lambda: f64, ops: &SpinOps) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            constraint: "must lie in [0, 1]",
        });
    }
    ops.check_dim(rho.array())?;
    let sqrt_1ml = C64::new((1.0 - lambda).sqrt(), 0.0);
    let sqrt_l = C64::new(lambda.sqrt(), 0.0);
    let k1 = ops.q_s.mapv(|z| z * sqrt_1ml);
    let k2 = ops.q_t.mapv(|z| z * sqrt_1ml);
    let k3 = linalg::identity(ops.dim()).mapv(|z| z * sqrt_l);
    let arr = rho.array();
    let mut out = Operator::zeros((ops.dim(), ops.dim()));
    for k in [&k1, &k2, &k3] {
        out += &k.dot(arr).dot(&linalg::dagger(k));
    }
    Ok(DensityMatrix::from_array_unchecked(out))
}
