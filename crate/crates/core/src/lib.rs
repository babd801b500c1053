//! Analysis and simulation toolkit for resonant piezoelectric vibration
//! energy harvesters driven at resonance.
//!
//! * [`harvester`]: lumped model, source impedance, optimal loads.
//! * [`load`]: power into impedance and generator loads, normalized maps,
//!   and an independent nodal solver used as an oracle.
//! * [`interface`]: analog impedance-emulation controller math and sizing.
//! * [`sim`]: behavioral and switched time-domain simulation, P&O baseline.
//! * [`identify`]: recovery of harvester parameters from power surfaces.

pub mod error;
pub mod harvester;
pub mod identify;
pub mod interface;
pub mod load;
pub mod mna;
pub mod sim;

pub use error::{Error, Result};
pub use harvester::HarvesterParams;
pub use load::LoadSpec;

/// Complex impedance, admittance or phasor.
pub type ComplexValue = num_complex::Complex64;
