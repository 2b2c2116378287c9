//! Extended Melnikov analysis of two-zone piecewise Hamiltonian systems with
//! impacts: impact maps, subharmonic and heteroclinic Melnikov functions,
//! periodic orbits (conservative and dissipative) and heteroclinic splitting,
//! with the rocking block as a built-in example.

pub mod error;
pub mod flow;
pub mod impact_map;
pub mod melnikov;
pub mod model;
pub mod numeric;
mod ode;
pub mod orbits;

pub use error::{Error, Result};
pub use model::{Perturbation, PhaseState, Potential, SystemConfig, TwoZoneSystem, Zone};
