//! Radical-pair spin dynamics engine.
//!
//! Builds the multi-spin operator algebra of a donor-acceptor radical pair,
//! integrates four competing master equations for its recombining spin state,
//! quantifies singlet-triplet coherence, and cross-validates the master
//! equations against ensembles of single-molecule quantum trajectories.

pub mod coherence;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod spin;
pub mod state;

pub use error::{Error, Result};
pub use linalg::{Operator, StateVector};
pub use state::{DensityMatrix, PureState};
