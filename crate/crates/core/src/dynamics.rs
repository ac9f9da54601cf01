//! Master-equation integrators for the recombining radical pair.
//!
//! Four right-hand sides are provided. All share the unitary term and the
//! singlet-triplet dephasing term; they differ in how recombination losses
//! are apportioned between the coherent and incoherent parts of rho:
//!
//! * `LindbladOnly` - dephasing only, trace preserving (no recombination).
//! * `Retrodictive` - recombination losses split between the incoherent
//!   part and the coherence-distilled part with weights 1 - p_coh and
//!   p_coh, the retrodiction probabilities of the product's origin.
//! * `Traditional` - Haberkorn anticommutator reaction terms.
//! * `JonesHore` - measurement-motivated reaction terms with the projected
//!   re-feeding term Q_x rho Q_x retained.
//!
//! Integration is fixed-step classical Runge-Kutta (RK4); the coherence
//! probability entering the retrodictive right-hand side is re-evaluated at
//! every stage so the nonlinearity does not degrade the integration order.

use num_complex::Complex64 as C64;

use crate::coherence::{
    coherence_c_of_blocks, partition_unchecked, pcoh_new_unclamped, CoherenceContext,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Operator};
use crate::spin::SpinOps;
use crate::state::DensityMatrix;

/// Singlet and triplet recombination rates, in units of the reference
/// hyperfine coupling A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub k_s: f64,
    pub k_t: f64,
}

impl RateParams {
    pub fn new(k_s: f64, k_t: f64) -> Result<Self> {
        for (name, value) in [("k_s", k_s), ("k_t", k_t)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
            if value < 0.0 {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    constraint: "must be >= 0",
                });
            }
        }
        Ok(Self { k_s, k_t })
    }

    pub fn total(&self) -> f64 {
        self.k_s + self.k_t
    }

    /// The S-T dephasing rate (k_S + k_T)/2.
    pub fn dephasing(&self) -> f64 {
        self.total() / 2.0
    }
}

/// Which master equation to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoryKind {
    LindbladOnly,
    Retrodictive,
    Traditional,
    JonesHore,
}

impl TheoryKind {
    pub fn label(&self) -> &'static str {
        match self {
            TheoryKind::LindbladOnly => "lindblad-only",
            TheoryKind::Retrodictive => "retrodictive",
            TheoryKind::Traditional => "traditional",
            TheoryKind::JonesHore => "jones-hore",
        }
    }
}

fn minus_i_commutator(h: &Operator, rho: &Operator) -> Operator {
    linalg::commutator(h, rho).mapv(|z| z * C64::new(0.0, -1.0))
}

/// Trace-preserving dephasing equation:
/// drho/dt = -i[H, rho] - (k_S + k_T)/2 (Q_S rho + rho Q_S - 2 Q_S rho Q_S).
///
/// The reaction operator equals the coherent part rho_ST + rho_TS.
pub fn rhs_lindblad_only(
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ops: &SpinOps,
) -> Operator {
    let part = partition_unchecked(rho, ops);
    let gamma = rates.dephasing();
    minus_i_commutator(h, rho) - part.coherent().mapv(|z| z * gamma)
}

/// Haberkorn master equation:
/// drho/dt = -i[H, rho] - k_S (Q_S rho + rho Q_S)/2 - k_T (Q_T rho + rho Q_T)/2.
pub fn rhs_traditional(
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ops: &SpinOps,
) -> Operator {
    let qs_rho = ops.q_s.dot(rho);
    let rho_qs = rho.dot(&ops.q_s);
    let qt_rho = ops.q_t.dot(rho);
    let rho_qt = rho.dot(&ops.q_t);
    minus_i_commutator(h, rho)
        - (qs_rho + rho_qs).mapv(|z| z * (0.5 * rates.k_s))
        - (qt_rho + rho_qt).mapv(|z| z * (0.5 * rates.k_t))
}

/// Jones-Hore master equation:
/// drho/dt = -i[H, rho] - k_S (Q_S rho + rho Q_S - Q_S rho Q_S)
///                      - k_T (Q_T rho + rho Q_T - Q_T rho Q_T).
pub fn rhs_jones_hore(
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ops: &SpinOps,
) -> Operator {
    let qs_rho = ops.q_s.dot(rho);
    let rho_qs = rho.dot(&ops.q_s);
    let qt_rho = ops.q_t.dot(rho);
    let rho_qt = rho.dot(&ops.q_t);
    let s_term = &qs_rho + &rho_qs - &qs_rho.dot(&ops.q_s);
    let t_term = &qt_rho + &rho_qt - &qt_rho.dot(&ops.q_t);
    minus_i_commutator(h, rho)
        - s_term.mapv(|z| z * rates.k_s)
        - t_term.mapv(|z| z * rates.k_t)
}

/// Retrodictive master equation, with the coherence probability supplied by
/// the caller.
///
/// Implemented in the block form
///
///   drho/dt = -i[H, rho]
///             - (k_S + k_T)/2 (rho_ST + rho_TS)
///             - (1 - p)(k_S rho_SS + k_T rho_TT)
///             - r (p rho_SS + p rho_TT + rho_ST + rho_TS),
///
/// with r = (k_S Tr rho_SS + k_T Tr rho_TT) / Tr rho. The last term is the
/// coherent-channel loss p * rho_coh written as a product, so no division
/// by p ever occurs. Forcing p = 0 removes that channel entirely (the
/// off-diagonal part included, since it carries a factor p * (1/p)) and
/// reproduces the Haberkorn equation.
pub fn rhs_retrodictive_with_p(
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    p: f64,
    ops: &SpinOps,
) -> Result<Operator> {
    let tr = linalg::trace(rho).re;
    if tr <= 0.0 {
        return Err(Error::InvalidTrace { trace: tr });
    }
    let part = partition_unchecked(rho, ops);
    let mut out = minus_i_commutator(h, rho);
    out -= &part.coherent().mapv(|z| z * rates.dephasing());
    let incoherent_loss = part.ss.mapv(|z| z * rates.k_s) + part.tt.mapv(|z| z * rates.k_t);
    out -= &incoherent_loss.mapv(|z| z * (1.0 - p));
    if p > 0.0 {
        let rate = (rates.k_s * linalg::trace(&part.ss).re
            + rates.k_t * linalg::trace(&part.tt).re)
            / tr;
        let coherent_loss = part.incoherent().mapv(|z| z * p) + part.coherent();
        out -= &coherent_loss.mapv(|z| z * rate);
    }
    Ok(out)
}

/// Retrodictive master equation, evaluating p_coh from the current state.
pub fn rhs_retrodictive(
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ctx: &CoherenceContext,
    ops: &SpinOps,
) -> Result<Operator> {
    let p = pcoh_new_unclamped(rho, ctx, ops)?.clamp(0.0, 1.0);
    rhs_retrodictive_with_p(rho, h, rates, p, ops)
}

/// Evaluate the right-hand side of the requested theory.
pub fn rhs(
    theory: TheoryKind,
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ctx: &CoherenceContext,
    ops: &SpinOps,
) -> Result<Operator> {
    match theory {
        TheoryKind::LindbladOnly => Ok(rhs_lindblad_only(rho, h, rates, ops)),
        TheoryKind::Traditional => Ok(rhs_traditional(rho, h, rates, ops)),
        TheoryKind::JonesHore => Ok(rhs_jones_hore(rho, h, rates, ops)),
        TheoryKind::Retrodictive => rhs_retrodictive(rho, h, rates, ctx, ops),
    }
}

/// The three S-T coherence decay rates of a theory at the state rho:
/// Gamma_c (decay of the coherent block), kappa (decay of the trace), and
/// the genuine rate gamma_c = Gamma_c - kappa governing rho_c / Tr rho.
///
/// kappa is common to the recombining theories,
/// kappa = k_S <Q~_S> + k_T <Q~_T>; the trace-preserving equation has
/// kappa = 0 and keeps the bare dephasing rate.
pub fn coherence_decay_rates(
    theory: TheoryKind,
    rho: &Operator,
    rates: RateParams,
    ops: &SpinOps,
) -> Result<(f64, f64, f64)> {
    ops.check_dim(rho)?;
    let tr = linalg::trace(rho).re;
    if tr <= 0.0 {
        return Err(Error::InvalidTrace { trace: tr });
    }
    let qs_norm = linalg::trace(&ops.q_s.dot(rho)).re / tr;
    let qt_norm = linalg::trace(&ops.q_t.dot(rho)).re / tr;
    let kappa_recombining = rates.k_s * qs_norm + rates.k_t * qt_norm;
    let (gamma_total, kappa) = match theory {
        TheoryKind::LindbladOnly => (rates.dephasing(), 0.0),
        TheoryKind::Retrodictive => (
            rates.k_s * (0.5 + qs_norm) + rates.k_t * (0.5 + qt_norm),
            kappa_recombining,
        ),
        TheoryKind::Traditional => (rates.dephasing(), kappa_recombining),
        TheoryKind::JonesHore => (rates.total(), kappa_recombining),
    };
    Ok((gamma_total, kappa, gamma_total - kappa))
}

/// Residual of the coherent-block identity
/// d rho_c/dt = -i[H, rho]_c - Gamma_c rho_c,
/// with [H, rho]_c = Q_S [H, rho] Q_T + Q_T [H, rho] Q_S.
///
/// Returns the max-norm difference between the ST+TS projection of the full
/// right-hand side and the model; a self-consistency check expected at the
/// 1e-10 level for all four theories.
pub fn coherent_block_rhs_check(
    theory: TheoryKind,
    rho: &Operator,
    h: &Operator,
    rates: RateParams,
    ctx: &CoherenceContext,
    ops: &SpinOps,
) -> Result<f64> {
    let full = rhs(theory, rho, h, rates, ctx, ops)?;
    let full_part = partition_unchecked(&full, ops);
    let projected = full_part.coherent();

    let comm = linalg::commutator(h, rho);
    let comm_part = partition_unchecked(&comm, ops);
    let comm_c = comm_part.coherent().mapv(|z| z * C64::new(0.0, -1.0));
    let (gamma_total, _, _) = coherence_decay_rates(theory, rho, rates, ops)?;
    let rho_part = partition_unchecked(rho, ops);
    let model = comm_c - rho_part.coherent().mapv(|z| z * gamma_total);

    Ok(linalg::max_abs_diff(&projected, &model))
}

/// Time series produced by [`propagate`].
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub theory: TheoryKind,
    /// Grid times t_k = k dt, including t = 0.
    pub time: Vec<f64>,
    /// Tr rho.
    pub trace: Vec<f64>,
    /// <Q_S> = Tr(rho Q_S).
    pub qs: Vec<f64>,
    /// Normalized <Q~_S> = Tr(rho Q_S) / Tr rho.
    pub qs_norm: Vec<f64>,
    /// Coherence probability p_coh (clamped to [0, 1]).
    pub pcoh: Vec<f64>,
    /// Coherence measure C(rho).
    pub coherence: Vec<f64>,
    /// Cumulative singlet product yield.
    pub yield_s: Vec<f64>,
    /// Cumulative triplet product yield.
    pub yield_t: Vec<f64>,
    /// Coherent-block decay rate Gamma_c.
    pub coh_decay_rate: Vec<f64>,
    /// Trace decay rate kappa.
    pub trace_decay_rate: Vec<f64>,
    /// Genuine S-T decoherence rate gamma_c = Gamma_c - kappa.
    pub genuine_decay_rate: Vec<f64>,
    /// How many recorded p_coh values exceeded 1 before clamping.
    pub pcoh_clamp_events: usize,
}

impl EvolutionResult {
    fn with_capacity(theory: TheoryKind, n: usize) -> Self {
        Self {
            theory,
            time: Vec::with_capacity(n),
            trace: Vec::with_capacity(n),
            qs: Vec::with_capacity(n),
            qs_norm: Vec::with_capacity(n),
            pcoh: Vec::with_capacity(n),
            coherence: Vec::with_capacity(n),
            yield_s: Vec::with_capacity(n),
            yield_t: Vec::with_capacity(n),
            coh_decay_rate: Vec::with_capacity(n),
            trace_decay_rate: Vec::with_capacity(n),
            genuine_decay_rate: Vec::with_capacity(n),
            pcoh_clamp_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Integration-stability guard: (k_S + k_T) dt must stay below this.
pub const RATE_DT_LIMIT: f64 = 0.1;

/// Positivity floor: integration aborts if an eigenvalue of rho drops
/// below this.
pub const POSITIVITY_FLOOR: f64 = -1e-6;

/// Integrate the chosen master equation with fixed-step RK4 and record the
/// full observable series on the grid t = 0, dt, ..., steps * dt.
///
/// Product yields accumulate as dn_x = k_x dt Tr(rho Q_x) evaluated at the
/// pre-step state. The state is re-symmetrized to its Hermitian part after
/// every step, and its spectrum is monitored: any eigenvalue below the
/// positivity floor or a non-finite entry aborts the run.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    theory: TheoryKind,
    rho0: &DensityMatrix,
    h: &Operator,
    rates: RateParams,
    dt: f64,
    steps: usize,
    ctx: &CoherenceContext,
    ops: &SpinOps,
) -> Result<EvolutionResult> {
    ops.check_dim(rho0.array())?;
    ops.check_dim(h)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            constraint: "must be positive and finite",
        });
    }
    let rate_dt = rates.total() * dt;
    if rate_dt >= RATE_DT_LIMIT {
        return Err(Error::StabilityGuard {
            what: "(k_S + k_T) dt",
            value: rate_dt,
            limit: RATE_DT_LIMIT,
        });
    }

    let mut rho = rho0.array().clone();
    let mut result = EvolutionResult::with_capacity(theory, steps + 1);
    let mut yield_s = 0.0;
    let mut yield_t = 0.0;
    record(&mut result, 0.0, &rho, yield_s, yield_t, theory, rates, ctx, ops)?;

    let half = dt / 2.0;
    let sixth = dt / 6.0;
    for step in 1..=steps {
        let qs_pre = linalg::trace(&ops.q_s.dot(&rho)).re;
        let qt_pre = linalg::trace(&ops.q_t.dot(&rho)).re;

        let k1 = rhs(theory, &rho, h, rates, ctx, ops)?;
        let k2 = rhs(theory, &(&rho + &k1.mapv(|z| z * half)), h, rates, ctx, ops)?;
        let k3 = rhs(theory, &(&rho + &k2.mapv(|z| z * half)), h, rates, ctx, ops)?;
        let k4 = rhs(theory, &(&rho + &k3.mapv(|z| z * dt)), h, rates, ctx, ops)?;
        let increment =
            (k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * sixth);
        rho += &increment;
        rho = linalg::hermitian_part(&rho);

        if !linalg::all_finite(&rho) {
            return Err(Error::IntegrationFailure {
                step,
                detail: "non-finite entries in rho".into(),
            });
        }
        let min_eig = linalg::min_eigenvalue(&rho)?;
        if min_eig < POSITIVITY_FLOOR {
            return Err(Error::IntegrationFailure {
                step,
                detail: format!("positivity violation: min eigenvalue {min_eig:e}"),
            });
        }

        yield_s += rates.k_s * dt * qs_pre;
        yield_t += rates.k_t * dt * qt_pre;
        let t = step as f64 * dt;
        record(&mut result, t, &rho, yield_s, yield_t, theory, rates, ctx, ops)?;
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn record(
    result: &mut EvolutionResult,
    t: f64,
    rho: &Operator,
    yield_s: f64,
    yield_t: f64,
    theory: TheoryKind,
    rates: RateParams,
    ctx: &CoherenceContext,
    ops: &SpinOps,
) -> Result<()> {
    let tr = linalg::trace(rho).re;
    if tr <= 0.0 {
        return Err(Error::InvalidTrace { trace: tr });
    }
    let qs = linalg::trace(&ops.q_s.dot(rho)).re;
    let part = partition_unchecked(rho, ops);
    let c = coherence_c_of_blocks(&part, ops)?;
    let p_raw = if ctx.is_degenerate() {
        0.0
    } else {
        c / (tr * ctx.c_max)
    };
    if p_raw > 1.0 {
        result.pcoh_clamp_events += 1;
    }
    let (gamma_total, kappa, genuine) = coherence_decay_rates(theory, rho, rates, ops)?;
    result.time.push(t);
    result.trace.push(tr);
    result.qs.push(qs);
    result.qs_norm.push(qs / tr);
    result.pcoh.push(p_raw.clamp(0.0, 1.0));
    result.coherence.push(c);
    result.yield_s.push(yield_s);
    result.yield_t.push(yield_t);
    result.coh_decay_rate.push(gamma_total);
    result.trace_decay_rate.push(kappa);
    result.genuine_decay_rate.push(genuine);
    Ok(())
}
