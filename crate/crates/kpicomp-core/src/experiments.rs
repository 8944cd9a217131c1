//! The three evaluations: rate–distortion sweeps, cross-cell aggregation
//! fidelity, and Median-Weekly-Signature forecasting under compression.
//!
//! Result records serialize to plot-ready CSV (one row per point, columns
//! exactly the record fields) and to JSON reports carrying the resolved
//! configuration for provenance.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codecs::{self, CodecKind};
use crate::error::{Error, Result};
use crate::kpi_model::{to_weekly_blocks, CellSeries, Dataset};
use crate::metrics::{self, SNR_CAP_DB};
use crate::quantizer::QuantizerConfig;
use crate::WEEK_HOURS;

/// One point of a rate–distortion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdPoint {
    pub codec: String,
    pub delta: f64,
    pub rate_bits_per_sample: f64,
    pub snr_db: f64,
    pub eligible_cell_count: usize,
}

/// One point of the aggregation experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationPoint {
    pub n_cells: usize,
    pub delta: f64,
    pub mean_per_cell_snr_db: f64,
    pub aggregate_snr_db: f64,
    pub replicate_index: usize,
}

/// One point of the forecasting experiment; `delta = None` marks the
/// uncompressed baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastPoint {
    pub delta: Option<f64>,
    pub mean_per_cell_snr_db: f64,
    pub mean_rmse: f64,
    pub cell_count: usize,
}

/// Sample-wise median over three history weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklySignature {
    pub values: Vec<f64>,
}

/// History weeks feeding one MWS forecast.
pub const MWS_HISTORY_WEEKS: usize = 3;
/// Samples needed for one forecast evaluation: three history weeks plus
/// the target week.
pub const FORECAST_SPAN: usize = (MWS_HISTORY_WEEKS + 1) * WEEK_HOURS;

fn validate_ladder(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("empty delta ladder".into()));
    }
    for pair in deltas.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidConfig(
                "delta ladder must be strictly decreasing".into(),
            ));
        }
    }
    if deltas.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::InvalidConfig(
            "delta ladder entries must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// 16 logarithmically spaced steps from `2 * sigma` down to `sigma / 2^14`,
/// where sigma is the pooled standard deviation of the dataset.
pub fn default_delta_ladder(dataset: &Dataset) -> Result<Vec<f64>> {
    let sigma = dataset.pooled_std();
    if sigma <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((-14..=1).rev().map(|e| sigma * (e as f64).exp2()).collect())
}

/// Run every requested codec over the delta ladder and report one
/// `(rate, SNR)` point per combination.
///
/// When the KLT participates, its training cells are excluded from
/// evaluation for *all* codecs so the curves share one eligible set.
pub fn rd_sweep(dataset: &Dataset, codecs: &[CodecKind], deltas: &[f64]) -> Result<Vec<RdPoint>> {
    validate_ladder(deltas)?;
    if codecs.is_empty() {
        return Err(Error::InvalidConfig("no codecs requested".into()));
    }

    let mut excluded = std::collections::BTreeSet::new();
    for codec in codecs {
        if let CodecKind::Klt(basis) = codec {
            excluded.extend(basis.training_cell_ids().iter().cloned());
        }
    }
    let eval = if excluded.is_empty() {
        dataset.clone()
    } else {
        dataset.excluding(&excluded)?
    };
    let originals: Vec<&[f64]> = eval.cells().iter().map(|c| c.samples.as_slice()).collect();

    let mut ordered: Vec<&CodecKind> = codecs.iter().collect();
    ordered.sort_by_key(|c| c.rank());

    let mut points = Vec::with_capacity(ordered.len() * deltas.len());
    for codec in ordered {
        for &delta in deltas {
            let run = codecs::run_codec(&eval, codec, &QuantizerConfig::new(delta)?)?;
            let recons: Vec<&[f64]> = run
                .results
                .iter()
                .map(|r| r.reconstruction.as_slice())
                .collect();
            let snr = metrics::pooled_snr(&originals, &recons)?;
            points.push(RdPoint {
                codec: codec.label().to_string(),
                delta,
                rate_bits_per_sample: run.rate.bits_per_sample,
                snr_db: snr.snr_db,
                eligible_cell_count: run.eligible_cell_count,
            });
        }
    }
    Ok(points)
}

/// Piecewise-linear SNR of one codec's curve at a target rate. `None`
/// outside the curve's rate span.
pub fn interpolate_snr_at(points: &[RdPoint], rate: f64) -> Option<f64> {
    let mut curve: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.rate_bits_per_sample, p.snr_db))
        .collect();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if curve.is_empty() || rate < curve[0].0 || rate > curve[curve.len() - 1].0 {
        return None;
    }
    for pair in curve.windows(2) {
        let (r0, s0) = pair[0];
        let (r1, s1) = pair[1];
        if rate >= r0 && rate <= r1 {
            if r1 == r0 {
                return Some(s0.max(s1));
            }
            return Some(s0 + (s1 - s0) * (rate - r0) / (r1 - r0));
        }
    }
    None
}

/// Aggregation experiment output with any clamping notes.
#[derive(Debug, Clone)]
pub struct AggregationResult {
    pub points: Vec<AggregationPoint>,
    pub warnings: Vec<String>,
}

/// Sum seeded random subsets of cells before and after compression and
/// compare aggregate SNR with the mean per-cell SNR.
///
/// Subsets are drawn per `(N, replicate)` so all deltas of one replicate
/// aggregate the same cells.
pub fn aggregation_experiment(
    dataset: &Dataset,
    codec: &CodecKind,
    deltas: &[f64],
    n_values: &[usize],
    replicates: usize,
    seed: u64,
    clamp: bool,
) -> Result<AggregationResult> {
    validate_ladder(deltas)?;
    if n_values.is_empty() || replicates == 0 {
        return Err(Error::InvalidConfig(
            "need at least one N value and one replicate".into(),
        ));
    }

    // Encode every eligible cell once per delta; subsets reuse the results.
    let mut per_delta: Vec<BTreeMap<&str, &[f64]>> = Vec::with_capacity(deltas.len());
    let mut runs = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        runs.push(codecs::run_codec(dataset, codec, &QuantizerConfig::new(delta)?)?);
    }
    for run in &runs {
        let map: BTreeMap<&str, &[f64]> = run
            .results
            .iter()
            .map(|r| (r.cell_id.as_str(), r.reconstruction.as_slice()))
            .collect();
        per_delta.push(map);
    }
    let eligible: Vec<&CellSeries> = match codec {
        CodecKind::Klt(basis) => dataset
            .cells()
            .iter()
            .filter(|c| !basis.training_cell_ids().contains(&c.cell_id))
            .collect(),
        _ => dataset.cells().iter().collect(),
    };

    let t = dataset.len();
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for (n_index, &requested_n) in n_values.iter().enumerate() {
        let n = if requested_n > eligible.len() {
            if !clamp {
                return Err(Error::InvalidConfig(format!(
                    "N = {requested_n} exceeds the {} eligible cells",
                    eligible.len()
                )));
            }
            warnings.push(format!(
                "N = {requested_n} clamped to the {} eligible cells",
                eligible.len()
            ));
            eligible.len()
        } else {
            requested_n
        };
        if n == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }

        for replicate in 0..replicates {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n_index as u64) << 32) | replicate as u64);
            let mut chosen: Vec<usize> =
                rand::seq::index::sample(&mut rng, eligible.len(), n).into_iter().collect();
            chosen.sort_unstable();

            for (delta_idx, &delta) in deltas.iter().enumerate() {
                let recon_of = &per_delta[delta_idx];
                let mut original_sum = vec![0.0f64; t];
                let mut recon_sum = vec![0.0f64; t];
                let mut pairs: Vec<(&[f64], &[f64])> = Vec::with_capacity(n);
                for &idx in &chosen {
                    let cell = eligible[idx];
                    let recon = recon_of[cell.cell_id.as_str()];
                    for i in 0..t {
                        original_sum[i] += cell.samples[i];
                        recon_sum[i] += recon[i];
                    }
                    pairs.push((cell.samples.as_slice(), recon));
                }
                let aggregate = metrics::per_cell_snr(&original_sum, &recon_sum)?;
                let (mean_db, _excluded) = metrics::mean_per_cell_snr(&pairs)?;
                points.push(AggregationPoint {
                    n_cells: n,
                    delta,
                    mean_per_cell_snr_db: mean_db,
                    aggregate_snr_db: aggregate.snr_db,
                    replicate_index: replicate,
                });
            }
        }
    }

    points.sort_by(|a, b| {
        a.n_cells
            .cmp(&b.n_cells)
            .then(b.delta.partial_cmp(&a.delta).unwrap())
            .then(a.replicate_index.cmp(&b.replicate_index))
    });
    Ok(AggregationResult { points, warnings })
}

/// Sample-wise median of exactly three history weeks.
pub fn mws_forecast(history: &[Vec<f64>]) -> Result<WeeklySignature> {
    if history.len() != MWS_HISTORY_WEEKS {
        return Err(Error::InvalidConfig(format!(
            "MWS needs exactly {MWS_HISTORY_WEEKS} weekly blocks, got {}",
            history.len()
        )));
    }
    for block in history {
        if block.len() != WEEK_HOURS {
            return Err(Error::Dimension {
                expected: WEEK_HOURS,
                got: block.len(),
            });
        }
    }
    let values = (0..WEEK_HOURS)
        .map(|i| median3(history[0][i], history[1][i], history[2][i]))
        .collect();
    Ok(WeeklySignature { values })
}

// Middle order statistic of three values.
fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Forecast week 4 from an MWS over weeks 1–3, compressing only the
/// history. Emits the uncompressed baseline first, then one point per
/// delta in descending order. RMSE is always measured against the
/// *uncompressed* target week.
pub fn forecasting_experiment(
    dataset: &Dataset,
    deltas: &[f64],
    codec: &CodecKind,
    clip_history: bool,
) -> Result<Vec<ForecastPoint>> {
    validate_ladder(deltas)?;
    if dataset.len() < FORECAST_SPAN {
        return Err(Error::TooShort {
            len: dataset.len(),
            need: FORECAST_SPAN,
        });
    }

    let eligible: Vec<&CellSeries> = match codec {
        CodecKind::Klt(basis) => dataset
            .cells()
            .iter()
            .filter(|c| !basis.training_cell_ids().contains(&c.cell_id))
            .collect(),
        _ => dataset.cells().iter().collect(),
    };
    // Cells whose history has no variance cannot report an SNR; they are
    // left out entirely and counted via `cell_count`.
    let history_len = MWS_HISTORY_WEEKS * WEEK_HOURS;
    let eligible: Vec<&CellSeries> = eligible
        .into_iter()
        .filter(|c| {
            let h = &c.samples[..history_len];
            let mean = h.iter().sum::<f64>() / history_len as f64;
            h.iter().any(|v| (v - mean).abs() > 0.0)
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleCells);
    }

    let history_series: Vec<CellSeries> = eligible
        .iter()
        .map(|c| CellSeries {
            cell_id: c.cell_id.clone(),
            kpi: c.kpi,
            samples: c.samples[..history_len].to_vec(),
            start_timestamp: c.start_timestamp,
        })
        .collect();

    let mut points = Vec::with_capacity(deltas.len() + 1);

    // Baseline: raw history, perfect reconstruction by definition.
    let baseline_rmse = mean_mws_rmse(&eligible, &history_series, history_len)?;
    points.push(ForecastPoint {
        delta: None,
        mean_per_cell_snr_db: SNR_CAP_DB,
        mean_rmse: baseline_rmse,
        cell_count: eligible.len(),
    });

    for &delta in deltas {
        let cfg = QuantizerConfig::new(delta)?;
        let mut snr_pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(eligible.len());
        let mut recon_history: Vec<CellSeries> = Vec::with_capacity(eligible.len());
        for hs in &history_series {
            let mut result = codecs::encode(hs, codec, &cfg)?;
            if clip_history {
                codecs::clip_nonnegative(&mut result.reconstruction);
            }
            snr_pairs.push((hs.samples.clone(), result.reconstruction.clone()));
            recon_history.push(CellSeries {
                cell_id: hs.cell_id.clone(),
                kpi: hs.kpi,
                samples: result.reconstruction,
                start_timestamp: hs.start_timestamp,
            });
        }
        let pair_refs: Vec<(&[f64], &[f64])> = snr_pairs
            .iter()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        let (mean_db, _excluded) = metrics::mean_per_cell_snr(&pair_refs)?;
        let mean_rmse = mean_mws_rmse(&eligible, &recon_history, history_len)?;
        points.push(ForecastPoint {
            delta: Some(delta),
            mean_per_cell_snr_db: mean_db,
            mean_rmse,
            cell_count: eligible.len(),
        });
    }

    Ok(points)
}

fn mean_mws_rmse(
    eligible: &[&CellSeries],
    history: &[CellSeries],
    history_len: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    for (cell, hist) in eligible.iter().zip(history) {
        let blocks = to_weekly_blocks(hist)?.blocks;
        let signature = mws_forecast(&blocks)?;
        let target = &cell.samples[history_len..history_len + WEEK_HOURS];
        sum += metrics::rmse(&signature.values, target)?;
    }
    Ok(sum / eligible.len() as f64)
}

// --- CSV emission ---------------------------------------------------------

pub fn write_rd_csv<W: Write>(points: &[RdPoint], mut w: W) -> Result<()> {
    writeln!(w, "codec,delta,rate_bits_per_sample,snr_db,eligible_cell_count")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.codec, p.delta, p.rate_bits_per_sample, p.snr_db, p.eligible_cell_count
        )?;
    }
    Ok(())
}

pub fn write_aggregation_csv<W: Write>(points: &[AggregationPoint], mut w: W) -> Result<()> {
    writeln!(
        w,
        "n_cells,delta,mean_per_cell_snr_db,aggregate_snr_db,replicate_index"
    )?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.n_cells, p.delta, p.mean_per_cell_snr_db, p.aggregate_snr_db, p.replicate_index
        )?;
    }
    Ok(())
}

pub fn write_forecast_csv<W: Write>(points: &[ForecastPoint], mut w: W) -> Result<()> {
    writeln!(w, "delta,mean_per_cell_snr_db,mean_rmse,cell_count")?;
    for p in points {
        let delta = match p.delta {
            Some(d) => d.to_string(),
            None => "uncompressed".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{}",
            delta, p.mean_per_cell_snr_db, p.mean_rmse, p.cell_count
        )?;
    }
    Ok(())
}
