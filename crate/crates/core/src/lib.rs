//! Doubly robust estimation of area-specific treatment effects when some
//! covariates are observed only in the survey sample.
//!
//! The pipeline fits outcome, propensity, and area-membership models by
//! cross-fitting ([`nuisance`]), combines them with population auxiliary
//! probabilities ([`auxiliary`]), and forms Horvitz-Thompson and Hajek
//! type estimators per area ([`estimator`]).

pub mod auxiliary;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod nuisance;
pub mod oracle;
pub mod simulation;

pub use error::{Error, Result};
