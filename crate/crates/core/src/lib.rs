//! Simulation and statistical verification of d-dimensional branching
//! Brownian motion: an exact event-driven engine with genealogy, closed-form
//! frontier curves, sphere-cap coverings, Brownian ballot estimators and the
//! replica campaigns that check the maximal-displacement asymptotics.

pub mod covering;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod frontier;
pub mod kernel;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
