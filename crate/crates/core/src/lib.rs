//! Stick-slip index (SSI) regression from 1 Hz surface drilling channels,
//! trained with three objectives: plain empirical risk minimization, adversarial
//! domain generalization through a gradient reversal layer, and invariant risk
//! minimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`drillsim`] simulates wells with a two-degree-of-freedom torsional model
//!   and injects the failure modes studied in the evaluation (telemetry lag,
//!   attenuation, label spikes).
//! - [`dataset`] windows records into 60 s samples, labels them with the SSI
//!   and assembles domain-tagged splits.
//! - [`autodiff`] is a small reverse-mode engine with fused LSTM, layer norm,
//!   dense, gradient reversal and loss operations plus Adam.
//! - [`models`], [`objectives`], [`training`] and [`transfer`] build, train and
//!   fine-tune the baseline, ADG and IRM models.
//! - [`metrics`] holds MSE, DTW, confusion matrices and severe-event recall.

pub mod autodiff;
pub mod benchmark;
pub mod cli;
pub mod dataset;
pub mod drillsim;
mod error;
pub mod metrics;
pub mod models;
pub mod objectives;
pub mod report;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
