//! Learning-based demand response for a thermostatically heated building.
//!
//! The crate bundles a grey-box building simulator, fitted Q-iteration agents
//! (plain and with a physics-informed state encoder), an MPC benchmark and an
//! experiment harness that ties them together.

pub mod encoder;
pub mod error;
pub mod fqi;
pub mod harness;
pub mod mdp;
pub mod mpc;
pub mod regress;
mod textio;
pub mod thermal;

pub use error::{Error, Result};
