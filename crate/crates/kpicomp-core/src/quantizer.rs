//! Uniform scalar quantization and the ideal-entropy rate estimate.
//!
//! Every codec in this crate quantizes with the same step rule
//! `index = round(u / delta)`, `reconstructed = delta * index`, and rates
//! are accounted as the Shannon entropy of the pooled index histogram
//! (ideal entropy coding, no concrete coder).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantization indices stay well inside i64 range; anything larger means
/// the caller fed pathological delta/value combinations.
const INDEX_LIMIT: i64 = 1 << 62;

/// Step size of the uniform scalar quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    delta: f64,
}

impl QuantizerConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quantizer step must be a positive finite number, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// The signed integer indices a codec emits for one unit of input
/// (a whole series for PCM/DPCM, one weekly block for transforms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStream {
    pub indices: Vec<i64>,
}

/// Ideal-entropy-coding rate over a pooled index histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Shannon entropy of the normalized histogram, bits per sample.
    pub bits_per_sample: f64,
    /// Pooled index counts the entropy was computed from.
    pub histogram: BTreeMap<i64, u64>,
}

/// Quantize one value: `(round(u / delta), delta * round(u / delta))`.
///
/// Ties round half-to-even so symmetric residual distributions pick up no
/// systematic bias.
pub fn quantize(u: f64, cfg: &QuantizerConfig) -> (i64, f64) {
    let scaled = (u / cfg.delta).round_ties_even();
    assert!(
        scaled.abs() < INDEX_LIMIT as f64,
        "quantization index overflow: {u} / {} = {scaled}",
        cfg.delta
    );
    let index = scaled as i64;
    (index, cfg.delta * index as f64)
}

/// Elementwise [`quantize`] over a vector.
pub fn quantize_vector(v: &[f64], cfg: &QuantizerConfig) -> (IndexStream, Vec<f64>) {
    let mut indices = Vec::with_capacity(v.len());
    let mut recon = Vec::with_capacity(v.len());
    for &u in v {
        let (i, r) = quantize(u, cfg);
        indices.push(i);
        recon.push(r);
    }
    (IndexStream { indices }, recon)
}

/// Pool every index from every stream into one histogram and return its
/// Shannon entropy in bits per sample.
pub fn entropy_rate<'a, I>(streams: I) -> Result<RateEstimate>
where
    I: IntoIterator<Item = &'a IndexStream>,
{
    let mut histogram: BTreeMap<i64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for stream in streams {
        for &i in &stream.indices {
            *histogram.entry(i).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyIndexSet);
    }
    Ok(RateEstimate {
        bits_per_sample: entropy_bits(&histogram, total),
        histogram,
    })
}

/// Merge per-cell rate histograms into one pooled estimate.
pub fn merge_rates(histograms: &[BTreeMap<i64, u64>]) -> Result<RateEstimate> {
    let mut histogram: BTreeMap<i64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for h in histograms {
        for (&i, &c) in h {
            *histogram.entry(i).or_insert(0) += c;
            total += c;
        }
    }
    if total == 0 {
        return Err(Error::EmptyIndexSet);
    }
    Ok(RateEstimate {
        bits_per_sample: entropy_bits(&histogram, total),
        histogram,
    })
}

// Entropy in bits via natural log / ln 2; 0 * log 0 := 0 falls out because
// empty bins never enter the histogram.
fn entropy_bits(histogram: &BTreeMap<i64, u64>, total: u64) -> f64 {
    let total = total as f64;
    let mut bits = 0.0;
    for &count in histogram.values() {
        let p = count as f64 / total;
        bits -= p * (p.ln() / std::f64::consts::LN_2);
    }
    bits.max(0.0)
}
