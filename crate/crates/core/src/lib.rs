//! Semiclassical simulator for a two-photon Raman laser in a sub-confocal
//! cavity: cavity design numbers, the four Zeeman pathways, field and
//! inversion dynamics, event-driven integration, and polarization analysis.

pub mod analysis;
pub mod cavity;
pub mod dynamics;
pub mod error;
pub mod integrator;
mod ode;
pub mod pathways;
pub mod scenario;

pub use error::{Error, Result};
pub use ode::{StepStats, Tolerances};
