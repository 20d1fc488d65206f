//! Robust stability and invariance analysis of uncertain feedback loops with
//! integral quadratic constraints, certified by dissipation inequalities.
//!
//! The crate is organised bottom-up:
//!
//! - [`statespace`]: realizations, interconnections and the multiplier filters.
//! - [`lmi`]: affine matrix expressions and the LMIs built from them.
//! - [`sdp`]: a dense primal-dual interior-point solver for those LMIs.
//! - [`riccati`]: stabilizing Riccati solutions and canonical factorizations.
//! - [`sim`]: exact sampled-data simulation and time-domain certificate checks.
//! - [`analysis`]: end-to-end pipelines.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod riccati;
pub mod sdp;
pub mod sim;
pub mod statespace;

pub use analysis::{AnalysisOptions, CertificateBundle, EllipsoidReport};
pub use error::{IqcError, Result};
pub use sdp::{SdpSolution, SdpStatus, SolverOptions};
pub use sim::Trajectory;
pub use statespace::{Interval, Realization, UncertainPlant};
