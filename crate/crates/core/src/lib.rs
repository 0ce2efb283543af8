//! Two-state-vector simulation of pre- and postselected photons in linear
//! optical circuits.
//!
//! A [`circuit::Scenario`] pairs a circuit with an input state and one final
//! state per detector. From it the crate computes weak values at any cut
//! ([`weakvalue`]), the response of a Gaussian pointer coupled with finite
//! strength ([`pointer`]), Monte Carlo ensembles of such measurements
//! ([`ensemble`]) and the effect of which-path tags on interference
//! ([`fringe`]). Scenarios can be written in a small text format
//! ([`interface::dsl`]) and results serialized to JSON or CSV
//! ([`interface::emit`]).

pub mod circuit;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod fringe;
pub mod hilbert;
pub mod interface;
pub mod pointer;
pub mod serde_complex;
pub mod weakvalue;

pub use error::{Error, Result};

/// Crate version, stamped into every result envelope.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
