//! Simulation and analysis of a periodically driven, dissipative macrospin.
//!
//! * [`classical`]: mean-field flow on the Bloch sphere and its Jacobian.
//! * [`lyapunov`]: tangent-space Lyapunov spectra and (Γ, κ) phase diagrams.
//! * [`quantum`]: finite-N Lindblad evolution in the Dicke basis, plus a
//!   full 2ᴺ-dimensional reference propagator for small N.
//! * [`analysis`]: stroboscopic scans, periodicity, basins, spectra and
//!   period-doubling cascades.
//! * [`symmetry`]: single-particle glide symmetry and Schur–Weyl bookkeeping.

pub mod analysis;
pub mod classical;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod quantum;
pub mod rk;
pub mod sweep;
pub mod symmetry;

pub use error::{Error, Result};
pub use model::{angle_to_vector, Couplings, MacrospinState, ModelParams, SphericalAngle};
pub use rk::{IntegratorSpec, RkOrder};
