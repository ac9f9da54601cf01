//! Spin operators, projectors, Hamiltonians, and initial states for a
//! radical pair: two electrons plus an arbitrary set of nuclear spins.
//!
//! The Hilbert-space factor order is fixed throughout the crate as
//! (donor electron, acceptor electron, nucleus 1, ..., nucleus M); every
//! embedded operator and product state follows this ordering. The basis of
//! each spin-s factor is ordered by descending magnetic quantum number,
//! m = s, s-1, ..., -s, so index 0 of a spin-1/2 factor is "up".

use ndarray::{linalg::kron, Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, identity, Operator, StateVector};
use crate::state::DensityMatrix;

/// Which electron a nucleus is hyperfine-coupled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Electron {
    Donor,
    Acceptor,
}

/// One nuclear spin: its quantum number, the electron it couples to, and
/// the isotropic hyperfine constant (in units of the reference coupling A).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearSpinSpec {
    spin: f64,
    electron: Electron,
    hyperfine: f64,
}

impl NuclearSpinSpec {
    /// A nuclear spin with quantum number `spin` (half-integer, >= 1/2)
    /// coupled to `electron` with isotropic constant `hyperfine`.
    pub fn new(spin: f64, electron: Electron, hyperfine: f64) -> Result<Self> {
        let doubled = 2.0 * spin;
        if !spin.is_finite() || spin < 0.5 || (doubled - doubled.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(spin));
        }
        if !hyperfine.is_finite() {
            return Err(Error::NonFinite {
                name: "hyperfine",
                value: hyperfine,
            });
        }
        Ok(Self {
            spin,
            electron,
            hyperfine,
        })
    }

    pub fn spin(&self) -> f64 {
        self.spin
    }

    pub fn electron(&self) -> Electron {
        self.electron
    }

    pub fn hyperfine(&self) -> f64 {
        self.hyperfine
    }

    /// Dimension 2I + 1 of this nucleus' factor space.
    pub fn multiplicity(&self) -> usize {
        (2.0 * self.spin).round() as usize + 1
    }
}

/// The multiplicity structure of a radical pair: two spin-1/2 electrons and
/// the declared nuclei. Fixes the total Hilbert dimension
/// d = 4 * prod(2 I_j + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    nuclei: Vec<NuclearSpinSpec>,
    dim: usize,
}

impl SpinSystem {
    pub fn new(nuclei: Vec<NuclearSpinSpec>) -> Self {
        let dim = 4 * nuclei.iter().map(|n| n.multiplicity()).product::<usize>();
        Self { nuclei, dim }
    }

    /// Bare radical pair: two electrons, no nuclei (d = 4).
    pub fn bare() -> Self {
        Self::new(Vec::new())
    }

    /// The single-nucleus model RP: one spin-1/2 nucleus on the donor with
    /// hyperfine constant 1 (the reference coupling), d = 8.
    pub fn one_nucleus() -> Self {
        Self::new(vec![
            NuclearSpinSpec::new(0.5, Electron::Donor, 1.0).expect("valid spec"),
        ])
    }

    pub fn nuclei(&self) -> &[NuclearSpinSpec] {
        &self.nuclei
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the nuclear subspace, prod(2 I_j + 1).
    pub fn nuclear_dim(&self) -> usize {
        self.dim / 4
    }

    /// Factor dimensions in tensor order: [2, 2, 2I_1+1, ..., 2I_M+1].
    fn factor_dims(&self) -> Vec<usize> {
        let mut dims = vec![2, 2];
        dims.extend(self.nuclei.iter().map(|n| n.multiplicity()));
        dims
    }
}

/// A tensor-product site of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Donor,
    Acceptor,
    /// `Nucleus(k)` is the k-th declared nucleus (zero-based).
    Nucleus(usize),
}

/// Cartesian spin component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinAxis {
    X,
    Y,
    Z,
}

/// Single-site spin matrix for quantum number `s`, from the ladder-operator
/// construction, in the descending-m basis.
pub fn spin_matrix(s: f64, axis: SpinAxis) -> Operator {
    let n = (2.0 * s).round() as usize + 1;
    let m_of = |k: usize| s - k as f64;
    let mut sp = Array2::<C64>::zeros((n, n));
    for k in 1..n {
        let m = m_of(k);
        sp[[k - 1, k]] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    match axis {
        SpinAxis::X => {
            let sm = linalg::dagger(&sp);
            (&sp + &sm).mapv(|z| z * 0.5)
        }
        SpinAxis::Y => {
            let sm = linalg::dagger(&sp);
            (&sp - &sm).mapv(|z| z * C64::new(0.0, -0.5))
        }
        SpinAxis::Z => Array2::from_diag(&Array1::from_iter(
            (0..n).map(|k| C64::new(m_of(k), 0.0)),
        )),
    }
}

fn site_factor_index(system: &SpinSystem, site: Site) -> Result<usize> {
    match site {
        Site::Donor => Ok(0),
        Site::Acceptor => Ok(1),
        Site::Nucleus(k) => {
            if k < system.nuclei.len() {
                Ok(2 + k)
            } else {
                Err(Error::InvalidSite {
                    index: k,
                    count: system.nuclei.len(),
                })
            }
        }
    }
}

fn site_spin(system: &SpinSystem, site: Site) -> f64 {
    match site {
        Site::Donor | Site::Acceptor => 0.5,
        Site::Nucleus(k) => system.nuclei[k].spin(),
    }
}

/// The single-site spin component tensored with identities on every other
/// factor, in the fixed factor order.
pub fn embed_spin_component(system: &SpinSystem, site: Site, axis: SpinAxis) -> Result<Operator> {
    let target = site_factor_index(system, site)?;
    let dims = system.factor_dims();
    let mut op = if target == 0 {
        spin_matrix(site_spin(system, site), axis)
    } else {
        identity(dims[0])
    };
    for (f, &df) in dims.iter().enumerate().skip(1) {
        let factor = if f == target {
            spin_matrix(site_spin(system, site), axis)
        } else {
            identity(df)
        };
        op = kron(&op, &factor);
    }
    Ok(op)
}

/// Scalar product of two embedded spin vectors, sum_axis s_a . s_b.
pub fn spin_dot(system: &SpinSystem, a: Site, b: Site) -> Result<Operator> {
    let mut out = Array2::<C64>::zeros((system.dim(), system.dim()));
    for axis in [SpinAxis::X, SpinAxis::Y, SpinAxis::Z] {
        let oa = embed_spin_component(system, a, axis)?;
        let ob = embed_spin_component(system, b, axis)?;
        out += &oa.dot(&ob);
    }
    Ok(out)
}

/// Electron singlet projector Q_S = 1/4 - s_D . s_A.
pub fn singlet_projector(system: &SpinSystem) -> Operator {
    let dot = spin_dot(system, Site::Donor, Site::Acceptor).expect("electron sites always valid");
    identity(system.dim()).mapv(|z| z * 0.25) - dot
}

/// Electron triplet projector Q_T = 3/4 + s_D . s_A.
pub fn triplet_projector(system: &SpinSystem) -> Operator {
    let dot = spin_dot(system, Site::Donor, Site::Acceptor).expect("electron sites always valid");
    identity(system.dim()).mapv(|z| z * 0.75) + dot
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Electron-pair singlet state |S> = (|ud> - |du>)/sqrt(2) in the
/// four-dimensional electron basis |uu>, |ud>, |du>, |dd>.
pub fn electron_singlet() -> StateVector {
    Array1::from(vec![
        C64::new(0.0, 0.0),
        C64::new(INV_SQRT2, 0.0),
        C64::new(-INV_SQRT2, 0.0),
        C64::new(0.0, 0.0),
    ])
}

/// Electron-pair triplet states (|T0>, |T+>, |T->).
pub fn electron_triplets() -> [StateVector; 3] {
    let t0 = Array1::from(vec![
        C64::new(0.0, 0.0),
        C64::new(INV_SQRT2, 0.0),
        C64::new(INV_SQRT2, 0.0),
        C64::new(0.0, 0.0),
    ]);
    let tp = Array1::from(vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
    ]);
    let tm = Array1::from(vec![
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
    ]);
    [t0, tp, tm]
}

fn outer(v: &StateVector) -> Operator {
    let n = v.len();
    Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj())
}

/// Projectors onto the individual triplet states, each
/// |T_j><T_j| (x) identity on all nuclei, ordered (T0, T+, T-).
/// Their sum is the triplet projector.
pub fn triplet_state_projectors(system: &SpinSystem) -> [Operator; 3] {
    let id_nuc = identity(system.nuclear_dim());
    electron_triplets().map(|t| kron(&outer(&t), &id_nuc))
}

/// Magnetic-interaction parameters, in units of the reference hyperfine
/// coupling A: the electron Larmor frequency and an optional electron
/// spin-exchange constant. Per-nucleus hyperfine constants come from the
/// system's `NuclearSpinSpec`s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSpec {
    pub larmor: f64,
    pub exchange: Option<f64>,
}

impl HamiltonianSpec {
    pub fn new(larmor: f64) -> Self {
        Self {
            larmor,
            exchange: None,
        }
    }

    pub fn with_exchange(larmor: f64, exchange: f64) -> Self {
        Self {
            larmor,
            exchange: Some(exchange),
        }
    }
}

/// H = omega (s_Dz + s_Az) + sum_j A_j s_e(j) . I_j + J s_D . s_A.
pub fn build_hamiltonian(system: &SpinSystem, spec: &HamiltonianSpec) -> Result<Operator> {
    if !spec.larmor.is_finite() {
        return Err(Error::NonFinite {
            name: "larmor",
            value: spec.larmor,
        });
    }
    let exchange = spec.exchange.unwrap_or(0.0);
    if !exchange.is_finite() {
        return Err(Error::NonFinite {
            name: "exchange",
            value: exchange,
        });
    }
    let sdz = embed_spin_component(system, Site::Donor, SpinAxis::Z)?;
    let saz = embed_spin_component(system, Site::Acceptor, SpinAxis::Z)?;
    let mut h = (&sdz + &saz).mapv(|z| z * spec.larmor);
    for (k, nucleus) in system.nuclei().iter().enumerate() {
        let electron_site = match nucleus.electron() {
            Electron::Donor => Site::Donor,
            Electron::Acceptor => Site::Acceptor,
        };
        let coupling = spin_dot(system, electron_site, Site::Nucleus(k))?;
        h += &coupling.mapv(|z| z * nucleus.hyperfine());
    }
    if exchange != 0.0 {
        let dot = spin_dot(system, Site::Donor, Site::Acceptor)?;
        h += &dot.mapv(|z| z * exchange);
    }
    Ok(h)
}

/// The singlet, nuclear-unpolarized initial state rho_0 = Q_S / Tr(Q_S).
pub fn singlet_initial_density(system: &SpinSystem) -> DensityMatrix {
    let qs = singlet_projector(system);
    let tr = linalg::trace(&qs).re;
    DensityMatrix::from_array_unchecked(qs.mapv(|z| z / tr))
}

/// The pure product state |S> (x) |k>, the electron singlet with the k-th
/// nuclear basis state.
pub fn singlet_with_nuclear_basis(system: &SpinSystem, k: usize) -> Result<StateVector> {
    let n_nuc = system.nuclear_dim();
    if k >= n_nuc {
        return Err(Error::InvalidSite {
            index: k,
            count: n_nuc,
        });
    }
    let s = electron_singlet();
    let mut psi = Array1::<C64>::zeros(system.dim());
    for (e, amp) in s.iter().enumerate() {
        psi[e * n_nuc + k] = *amp;
    }
    Ok(psi)
}

/// Precomputed projector set for a system: the singlet/triplet projectors
/// and the three per-triplet-state projectors. Built once per run and
/// shared read-only by the dynamics, coherence, and Monte-Carlo code.
#[derive(Debug, Clone)]
pub struct SpinOps {
    pub q_s: Operator,
    pub q_t: Operator,
    pub p_t: [Operator; 3],
    dim: usize,
}

impl SpinOps {
    pub fn new(system: &SpinSystem) -> Self {
        Self {
            q_s: singlet_projector(system),
            q_t: triplet_projector(system),
            p_t: triplet_state_projectors(system),
            dim: system.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the nuclear subspace.
    pub fn nuclear_dim(&self) -> usize {
        self.dim / 4
    }

    pub(crate) fn check_dim(&self, rho: &Operator) -> Result<()> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rho.nrows(),
            });
        }
        Ok(())
    }
}
