//! Dissipative quantum dynamics of the Kostin (Schrödinger-Langevin)
//! equation at three levels of description:
//!
//! * [`moments`]: the reduced Gaussian dynamics (damped Newton equation for
//!   the center, damped Pinney equation for the width) and its closed forms;
//! * [`perturbation`]: the friction-dominated perturbation series for the
//!   free width, including the integration constants;
//! * [`pde`]: a split-step solver for the full nonlinear wave equation;
//!
//! plus phase-space diagnostics in [`wigner`].

pub mod error;
pub mod export;
pub mod moments;
pub mod ode;
pub mod params;
pub mod pde;
pub mod perturbation;
pub mod potential;
pub mod roots;
pub mod wigner;

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{KostinError, Result};
pub use params::{GridSpec, PacketState, PhysicalParams};
pub use potential::{potential_eval, Polynomial, Potential, PotentialValue, TimeFunction, UserCallable};
