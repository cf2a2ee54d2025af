//! Simulation of an adiabatic CNOT between two donor nuclear spins in
//! silicon, mediated by their bound electrons, including σ^z dephasing.

pub mod adiabaticity;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gate;
pub mod hamiltonian;
pub mod parallel;
pub mod pulses;
pub mod spin;
pub mod sweep;

pub use error::{Error, Result};
