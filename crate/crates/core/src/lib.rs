//! Granger-net inference for event-level spatio-temporal forecasting.
//!
//! The pipeline turns geolocated event logs into daily Boolean streams per
//! (tile, event class), learns one crossed probabilistic finite-state
//! transducer per (source, target, delay), keeps the useful ones as a sparse
//! network, boosts them into per-target predictors and evaluates those
//! out-of-sample. A perturbation module probes the fixed network with
//! bounded rate changes.

pub mod binio;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod geo;
pub mod ingest;
pub mod net;
pub mod perturb;
pub mod pipeline;
pub mod quantize;
pub mod synth;
pub mod xpfsa;

pub use error::{Error, Result};
