//! Robust forecasting of functional time series: dynamic functional
//! principal component decomposition from an estimated long-run
//! covariance, robust score forecasting via trimmed-squares VAR
//! estimators, and experiment tooling for forecast comparison.

pub mod chi2;
pub mod error;
pub mod fcurve;
pub mod fpca;
pub mod ingest;
pub mod longrun;
pub mod manifest;
pub mod mcs;
pub mod optim;
pub mod pipeline;
pub mod robust;
pub mod sim;
pub mod var;

pub use error::{Error, Result};
