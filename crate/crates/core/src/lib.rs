//! Short-term line-loss-rate forecasting for a distribution feeder.
//!
//! The pipeline runs end to end on plain `f64` arrays: SCADA ingestion and
//! cleaning (density clustering + local outlier factor, iterative forest
//! imputation), mixed feature construction over the feeder graph, a
//! GCN + three-level-attention + LSTM forecaster built on a reverse-mode
//! autodiff tape, and an Adam training loop with gradient clipping and
//! early stopping.

pub mod cleaning;
pub mod error;
pub mod features;
pub mod graph;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
