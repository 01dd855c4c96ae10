//! Estimation of good-parameter sets for deterministic discrete-time models.
//!
//! Candidates from a finite grid are drawn, simulated, and kept when a binary
//! fitness map accepts their trajectory. [`bounds`] sizes the number of draws
//! and [`covidpipe`] applies the method week by week to epidemic counts.

pub mod bounds;
pub mod candidates;
pub mod covidpipe;
pub mod dynsys;
pub mod error;
pub mod estimator;
pub mod fitness;
pub mod report;

pub use candidates::{CandidateGrid, DiscreteDist, Sampler};
pub use dynsys::{ModelKind, PeakTarget, StateVector, Trajectory};
pub use error::{Error, Result};
pub use estimator::{GoodSet, WorkerPool};
pub use fitness::{DayWindow, FitnessRule, FitnessSpec};
