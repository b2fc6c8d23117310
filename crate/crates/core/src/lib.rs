//! Marked rare-event point processes of sequential and random beta-map systems.
//!
//! The crate simulates orbits of drifting or randomly chosen beta
//! transformations, extracts exceedances of an observable peaked at a target
//! point, groups them into clusters, and compares the resulting marked point
//! processes with their compound Poisson limits.

pub mod dynamics;
pub mod error;
pub mod observables;
pub mod pointprocess;
pub mod seeds;
pub mod stats;
pub mod theory;
pub mod thresholds;

pub use error::{Error, Result};
