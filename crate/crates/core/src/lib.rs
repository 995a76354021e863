//! Synthetic Treasury-yield time series via a DoppelGANger-style GAN, plus
//! the downstream models that consume the synthetic data: stacked-LSTM yield
//! forecasters and recession-probability classifiers (L1 logistic regression
//! and an LSTM classifier), with fidelity and evaluation metrics for all of it.

pub mod autodiff;
pub mod checkpoint;
pub mod dgan;
pub mod downstream;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod sampling;
pub mod toy;

pub use error::{Error, Result};
