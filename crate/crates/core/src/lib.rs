//! Numerical laboratory for isotropic steady states of the spherically
//! symmetric Einstein-Vlasov system: steady-state construction, linearly
//! dynamically accessible perturbations, free-energy coercivity checks, and
//! linearized evolution with conservation monitors.

pub mod eos;
pub mod error;
pub mod expr;
pub mod perturb;
pub mod phase_space;
pub mod quad;
pub mod steady;
pub mod support;

pub use error::{CoreError, Result};
