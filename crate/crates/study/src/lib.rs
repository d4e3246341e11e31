//! Monte Carlo convergence studies for the spectral SPDE schemes in
//! `spde-core`: coupled reference solutions, error estimation, cost tables,
//! EOC plans and the `spde` command-line tool.

pub mod config;
pub mod coupling;
pub mod error;
pub mod estimate;
pub mod study;
pub mod tables;

pub use error::{Result, StudyError};
