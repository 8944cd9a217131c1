//! The four compression schemes behind one codec contract: PCM, DPCM,
//! block DCT and trained KLT. Encoding turns a cell series into index
//! streams at step delta; a separate decode path rebuilds the
//! reconstruction bit-exactly from `(indices, delta, side info, basis)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi_model::{to_weekly_blocks, CellSeries, Dataset};
use crate::quantizer::{self, IndexStream, QuantizerConfig, RateEstimate};
use crate::transforms::{build_dct, DctBasis, KltBasis, Transform};
use crate::WEEK_HOURS;

/// Bits charged for one uncoded side-information sample (the 32-bit
/// floating-point baseline representation).
pub const SIDE_INFO_BITS: f64 = 32.0;

fn shared_dct() -> &'static DctBasis {
    static DCT: OnceLock<DctBasis> = OnceLock::new();
    DCT.get_or_init(build_dct)
}

/// Compression scheme selector. Only the KLT carries trained state.
#[derive(Debug, Clone)]
pub enum CodecKind {
    Pcm,
    Dpcm,
    Dct,
    Klt(Arc<KltBasis>),
}

impl CodecKind {
    pub fn label(&self) -> &'static str {
        match self {
            CodecKind::Pcm => "pcm",
            CodecKind::Dpcm => "dpcm",
            CodecKind::Dct => "dct",
            CodecKind::Klt(_) => "klt",
        }
    }

    /// Canonical ordering for reports: pcm, dpcm, dct, klt.
    pub fn rank(&self) -> usize {
        match self {
            CodecKind::Pcm => 0,
            CodecKind::Dpcm => 1,
            CodecKind::Dct => 2,
            CodecKind::Klt(_) => 3,
        }
    }

    fn transform(&self) -> Option<&dyn Transform> {
        match self {
            CodecKind::Pcm | CodecKind::Dpcm => None,
            CodecKind::Dct => Some(shared_dct()),
            CodecKind::Klt(basis) => Some(basis.as_ref()),
        }
    }
}

/// Everything one (codec, delta, cell) encoding produced.
#[derive(Debug, Clone)]
pub struct CodecResult {
    pub cell_id: String,
    pub codec: CodecKind,
    pub delta: f64,
    pub index_streams: Vec<IndexStream>,
    pub reconstruction: Vec<f64>,
    /// Samples transmitted uncoded (the DPCM initial sample), excluded from
    /// the rate histogram.
    pub side_info: Vec<f64>,
}

impl CodecResult {
    pub fn side_info_samples(&self) -> usize {
        self.side_info.len()
    }
}

/// PCM: quantize directly in the sample domain.
pub fn encode_pcm(series: &CellSeries, cfg: &QuantizerConfig) -> CodecResult {
    let (stream, reconstruction) = quantizer::quantize_vector(&series.samples, cfg);
    CodecResult {
        cell_id: series.cell_id.clone(),
        codec: CodecKind::Pcm,
        delta: cfg.delta(),
        index_streams: vec![stream],
        reconstruction,
        side_info: Vec::new(),
    }
}

/// DPCM: first-order prediction with closed-loop reconstruction. The first
/// sample travels uncoded; every residual is quantized against the
/// *reconstructed* predecessor so errors cannot accumulate.
pub fn encode_dpcm(series: &CellSeries, cfg: &QuantizerConfig) -> CodecResult {
    let delta = cfg.delta();
    let mut indices = Vec::with_capacity(series.samples.len().saturating_sub(1));
    let mut reconstruction = Vec::with_capacity(series.samples.len());

    let mut prev = series.samples[0];
    reconstruction.push(prev);
    for &x in &series.samples[1..] {
        let (index, _) = quantizer::quantize(x - prev, cfg);
        let next = prev + delta * index as f64;
        indices.push(index);
        reconstruction.push(next);
        prev = next;
    }

    CodecResult {
        cell_id: series.cell_id.clone(),
        codec: CodecKind::Dpcm,
        delta,
        index_streams: vec![IndexStream { indices }],
        reconstruction,
        side_info: vec![series.samples[0]],
    }
}

/// Transform coding: per weekly block, quantize all 168 coefficients with
/// the same step and reconstruct through the inverse transform.
pub fn encode_transform(
    series: &CellSeries,
    cfg: &QuantizerConfig,
    codec: &CodecKind,
) -> Result<CodecResult> {
    let basis = codec
        .transform()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is not a transform codec", codec.label())))?;
    if series.samples.len() % WEEK_HOURS != 0 {
        return Err(Error::Dimension {
            expected: WEEK_HOURS,
            got: series.samples.len() % WEEK_HOURS,
        });
    }
    let blocks = to_weekly_blocks(series)?;

    let mut index_streams = Vec::with_capacity(blocks.blocks.len());
    let mut reconstruction = Vec::with_capacity(series.samples.len());
    for block in &blocks.blocks {
        let coeffs = basis.forward(block)?;
        let (stream, quantized) = quantizer::quantize_vector(&coeffs, cfg);
        reconstruction.extend(basis.inverse(&quantized)?);
        index_streams.push(stream);
    }

    Ok(CodecResult {
        cell_id: series.cell_id.clone(),
        codec: codec.clone(),
        delta: cfg.delta(),
        index_streams,
        reconstruction,
        side_info: Vec::new(),
    })
}

/// Encode one cell with any codec.
pub fn encode(series: &CellSeries, codec: &CodecKind, cfg: &QuantizerConfig) -> Result<CodecResult> {
    if series.samples.is_empty() {
        return Err(Error::TooShort { len: 0, need: 1 });
    }
    match codec {
        CodecKind::Pcm => Ok(encode_pcm(series, cfg)),
        CodecKind::Dpcm => Ok(encode_dpcm(series, cfg)),
        CodecKind::Dct | CodecKind::Klt(_) => encode_transform(series, cfg, codec),
    }
}

/// Rebuild a reconstruction from transported data only. Mirrors the
/// encoder's arithmetic exactly, so the result is bit-identical to
/// [`CodecResult::reconstruction`].
pub fn decode(
    codec: &CodecKind,
    delta: f64,
    t: usize,
    side_info: &[f64],
    index_streams: &[IndexStream],
) -> Result<Vec<f64>> {
    match codec {
        CodecKind::Pcm => {
            let stream = expect_streams(index_streams, 1, t)?;
            Ok(stream[0].indices.iter().map(|&i| delta * i as f64).collect())
        }
        CodecKind::Dpcm => {
            if side_info.len() != 1 {
                return Err(Error::ArtifactFormat(
                    "dpcm needs exactly one side-info sample".into(),
                ));
            }
            let stream = expect_streams(index_streams, 1, t.saturating_sub(1))?;
            let mut out = Vec::with_capacity(t);
            let mut prev = side_info[0];
            out.push(prev);
            for &i in &stream[0].indices {
                prev += delta * i as f64;
                out.push(prev);
            }
            Ok(out)
        }
        CodecKind::Dct | CodecKind::Klt(_) => {
            let basis = codec.transform().expect("transform codec");
            if t % WEEK_HOURS != 0 {
                return Err(Error::Dimension {
                    expected: WEEK_HOURS,
                    got: t % WEEK_HOURS,
                });
            }
            let streams = expect_streams(index_streams, t / WEEK_HOURS, WEEK_HOURS)?;
            let mut out = Vec::with_capacity(t);
            for stream in streams {
                let quantized: Vec<f64> = stream.indices.iter().map(|&i| delta * i as f64).collect();
                out.extend(basis.inverse(&quantized)?);
            }
            Ok(out)
        }
    }
}

fn expect_streams(streams: &[IndexStream], count: usize, len: usize) -> Result<&[IndexStream]> {
    if streams.len() != count || streams.iter().any(|s| s.indices.len() != len) {
        return Err(Error::ArtifactFormat(format!(
            "expected {count} index stream(s) of {len} indices"
        )));
    }
    Ok(streams)
}

/// One full codec run over a dataset.
#[derive(Debug, Clone)]
pub struct CodecRun {
    pub results: Vec<CodecResult>,
    /// Pooled ideal-entropy rate over every index of every eligible cell.
    pub rate: RateEstimate,
    /// Amortized cost of uncoded side-info samples, reported separately
    /// from the entropy rate.
    pub side_info_bits_per_sample: f64,
    pub eligible_cell_count: usize,
}

/// Apply a codec to every eligible cell of the dataset and pool the index
/// histograms into one rate estimate. For the KLT the training cells are
/// excluded from evaluation.
pub fn run_codec(dataset: &Dataset, codec: &CodecKind, cfg: &QuantizerConfig) -> Result<CodecRun> {
    let eligible: Vec<&CellSeries> = match codec {
        CodecKind::Klt(basis) => dataset
            .cells()
            .iter()
            .filter(|c| !basis.training_cell_ids().contains(&c.cell_id))
            .collect(),
        _ => dataset.cells().iter().collect(),
    };
    if eligible.is_empty() {
        return Err(Error::NoEligibleCells);
    }

    // Cells are processed in sorted id order; the parallel map preserves
    // that order, so pooled histograms and outputs are deterministic.
    let results: Result<Vec<CodecResult>> = eligible
        .par_iter()
        .map(|cell| encode(cell, codec, cfg))
        .collect();
    let results = results?;

    let histograms: Vec<BTreeMap<i64, u64>> = results
        .iter()
        .map(|r| {
            let mut h = BTreeMap::new();
            for stream in &r.index_streams {
                for &i in &stream.indices {
                    *h.entry(i).or_insert(0u64) += 1;
                }
            }
            h
        })
        .collect();
    let rate = quantizer::merge_rates(&histograms)?;

    let total_samples: usize = results.iter().map(|r| r.reconstruction.len()).sum();
    let side_samples: usize = results.iter().map(|r| r.side_info_samples()).sum();
    let side_info_bits_per_sample = SIDE_INFO_BITS * side_samples as f64 / total_samples as f64;

    Ok(CodecRun {
        eligible_cell_count: results.len(),
        results,
        rate,
        side_info_bits_per_sample,
    })
}

/// Clamp a reconstruction to nonnegative values. Transform codecs may
/// produce slightly negative samples for nonnegative KPIs; this view is
/// opt-in because clipping breaks the Parseval bookkeeping.
pub fn clip_nonnegative(reconstruction: &mut [f64]) {
    for v in reconstruction {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

// --- Serialized artifact -------------------------------------------------
//
// Layout: magic "KPC1", a little-endian u32 JSON-header length, the JSON
// header, then the payload: for each cell in header order, every index
// stream's values as zigzag LEB128 varints. Stream shapes are implied by
// (codec, t), side info and delta live in the header, and the KLT basis is
// intentionally NOT embedded (it is shared side information).

const ARTIFACT_MAGIC: &[u8; 4] = b"KPC1";

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactHeader {
    codec: String,
    delta: f64,
    kpi: String,
    start_timestamp: String,
    t: usize,
    cells: Vec<ArtifactCell>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactCell {
    cell_id: String,
    side_info: Vec<f64>,
}

/// Serialize a codec run for transport.
pub fn write_artifact<W: Write>(
    mut writer: W,
    dataset_kpi: &str,
    start_timestamp: &str,
    t: usize,
    results: &[CodecResult],
) -> Result<()> {
    let codec = results
        .first()
        .ok_or_else(|| Error::ArtifactFormat("nothing to serialize".into()))?;
    let header = ArtifactHeader {
        codec: codec.codec.label().to_string(),
        delta: codec.delta,
        kpi: dataset_kpi.to_string(),
        start_timestamp: start_timestamp.to_string(),
        t,
        cells: results
            .iter()
            .map(|r| ArtifactCell {
                cell_id: r.cell_id.clone(),
                side_info: r.side_info.clone(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    writer.write_all(ARTIFACT_MAGIC)?;
    writer.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    writer.write_all(&header_bytes)?;
    for result in results {
        for stream in &result.index_streams {
            for &index in &stream.indices {
                write_varint(&mut writer, zigzag(index))?;
            }
        }
    }
    Ok(())
}

/// Decoded artifact: per-cell reconstructions plus transport metadata.
#[derive(Debug)]
pub struct DecodedArtifact {
    pub codec_label: String,
    pub delta: f64,
    pub kpi: String,
    pub start_timestamp: String,
    pub t: usize,
    /// `(cell_id, reconstruction)` in header order.
    pub cells: Vec<(String, Vec<f64>)>,
}

/// Read an artifact back and rebuild every reconstruction. `klt_basis`
/// must be supplied when the artifact was KLT-coded.
pub fn read_artifact<R: Read>(mut reader: R, klt_basis: Option<Arc<KltBasis>>) -> Result<DecodedArtifact> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != ARTIFACT_MAGIC {
        return Err(Error::ArtifactFormat("bad magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes)?;
    let header: ArtifactHeader = serde_json::from_slice(&header_bytes)?;

    let codec = match header.codec.as_str() {
        "pcm" => CodecKind::Pcm,
        "dpcm" => CodecKind::Dpcm,
        "dct" => CodecKind::Dct,
        "klt" => CodecKind::Klt(klt_basis.ok_or_else(|| {
            Error::ArtifactFormat("klt artifact needs the trained basis".into())
        })?),
        other => {
            return Err(Error::ArtifactFormat(format!("unknown codec {other:?}")));
        }
    };

    let stream_shape: Vec<usize> = match codec {
        CodecKind::Pcm => vec![header.t],
        CodecKind::Dpcm => vec![header.t.saturating_sub(1)],
        CodecKind::Dct | CodecKind::Klt(_) => {
            if header.t % WEEK_HOURS != 0 {
                return Err(Error::ArtifactFormat(format!(
                    "transform artifact length {} is not a whole number of weeks",
                    header.t
                )));
            }
            vec![WEEK_HOURS; header.t / WEEK_HOURS]
        }
    };

    let mut cells = Vec::with_capacity(header.cells.len());
    for cell in &header.cells {
        let mut streams = Vec::with_capacity(stream_shape.len());
        for &len in &stream_shape {
            let mut indices = Vec::with_capacity(len);
            for _ in 0..len {
                indices.push(unzigzag(read_varint(&mut reader)?));
            }
            streams.push(IndexStream { indices });
        }
        let reconstruction = decode(&codec, header.delta, header.t, &cell.side_info, &streams)?;
        cells.push((cell.cell_id.clone(), reconstruction));
    }

    Ok(DecodedArtifact {
        codec_label: header.codec,
        delta: header.delta,
        kpi: header.kpi,
        start_timestamp: header.start_timestamp,
        t: header.t,
        cells,
    })
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

fn write_varint<W: Write>(writer: &mut W, mut v: u64) -> Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            writer.write_all(&[byte])?;
            return Ok(());
        }
        writer.write_all(&[byte | 0x80])?;
    }
}

fn read_varint<R: Read>(reader: &mut R) -> Result<u64> {
    let mut out = 0u64;
    let mut shift = 0u32;
    loop {
        let mut byte = [0u8; 1];
        reader.read_exact(&mut byte)?;
        out |= u64::from(byte[0] & 0x7f) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(out);
        }
        shift += 7;
        if shift >= 64 {
            return Err(Error::ArtifactFormat("varint overflow".into()));
        }
    }
}
