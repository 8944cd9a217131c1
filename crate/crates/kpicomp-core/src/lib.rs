//! Lossy compression of cellular-network KPI time series.
//!
//! The crate models hourly KPI series (traffic volume, PRB occupancy,
//! active users) per cell, compresses them with four schemes behind one
//! codec contract (PCM, DPCM, block DCT, trained KLT — all driven by a
//! uniform scalar quantizer with ideal-entropy rate accounting), and
//! evaluates the results through rate–distortion sweeps, cross-cell
//! aggregation fidelity and Median-Weekly-Signature forecasting.

pub mod codecs;
pub mod error;
pub mod experiments;
pub mod kpi_model;
pub mod metrics;
pub mod quantizer;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};

/// Samples per weekly block: one week of hourly measurements.
pub const WEEK_HOURS: usize = 168;
