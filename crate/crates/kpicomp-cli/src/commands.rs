//! Resolved command configurations and their execution. Every command
//! loads or generates data, runs the corresponding library call, writes
//! its outputs plus a manifest, and is reproducible from that manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kpicomp_core::codecs::{self, CodecKind};
use kpicomp_core::experiments::{
    aggregation_experiment, default_delta_ladder, forecasting_experiment, rd_sweep,
    write_aggregation_csv, write_forecast_csv, write_rd_csv, AggregationPoint,
};
use kpicomp_core::kpi_model::{self, format_hour_timestamp, Dataset, KpiKind};
use kpicomp_core::quantizer::QuantizerConfig;
use kpicomp_core::synth;
use kpicomp_core::transforms::{train_klt, KltBasis};

use crate::manifest::{manifest_path_for, write_output, RunManifest};
use crate::svg::Chart;

pub const CODEC_NAMES: [&str; 4] = ["pcm", "dpcm", "dct", "klt"];

/// Fully resolved configuration of one command run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandConfig {
    Synth(SynthCmd),
    Rd(RdCmd),
    Aggregate(AggregateCmd),
    Forecast(ForecastCmd),
    Roundtrip(RoundtripCmd),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Synth(_) => "synth",
            CommandConfig::Rd(_) => "rd",
            CommandConfig::Aggregate(_) => "aggregate",
            CommandConfig::Forecast(_) => "forecast",
            CommandConfig::Roundtrip(_) => "roundtrip",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthCmd {
    pub kpi: KpiKind,
    pub cells: usize,
    pub weeks: usize,
    pub seed: u64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub noise_std: f64,
    pub scale_sigma: f64,
    pub correlation: f64,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RdCmd {
    pub input: PathBuf,
    pub kpi: KpiKind,
    pub codecs: Vec<String>,
    /// `None` until resolved; manifests always carry the concrete ladder.
    pub deltas: Option<Vec<f64>>,
    pub klt_fraction: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateCmd {
    pub input: PathBuf,
    pub kpi: KpiKind,
    pub codec: String,
    pub deltas: Option<Vec<f64>>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub klt_fraction: f64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastCmd {
    pub input: PathBuf,
    pub kpi: KpiKind,
    pub codec: String,
    pub deltas: Option<Vec<f64>>,
    pub klt_fraction: f64,
    pub seed: u64,
    pub clip: bool,
    pub out_dir: PathBuf,
    pub svg: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripCmd {
    pub input: PathBuf,
    pub kpi: KpiKind,
    pub codec: String,
    pub delta: f64,
    pub klt_fraction: f64,
    pub seed: u64,
    pub output: PathBuf,
}

/// Execute one command and return the manifest it wrote.
pub fn run(config: CommandConfig) -> Result<RunManifest> {
    match config {
        CommandConfig::Synth(cmd) => execute_synth(cmd),
        CommandConfig::Rd(cmd) => execute_rd(cmd),
        CommandConfig::Aggregate(cmd) => execute_aggregate(cmd),
        CommandConfig::Forecast(cmd) => execute_forecast(cmd),
        CommandConfig::Roundtrip(cmd) => execute_roundtrip(cmd),
    }
}

/// Re-execute a manifest, optionally redirecting outputs, and check that
/// the rewritten files hash to the recorded values.
pub fn rerun(manifest_path: &Path, out_dir: Option<&Path>) -> Result<(RunManifest, bool)> {
    let previous = RunManifest::load(manifest_path)?;
    let mut config = previous.config.clone();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        match &mut config {
            CommandConfig::Synth(c) => retarget(&mut c.output, dir),
            CommandConfig::Roundtrip(c) => retarget(&mut c.output, dir),
            CommandConfig::Rd(c) => c.out_dir = dir.to_path_buf(),
            CommandConfig::Aggregate(c) => c.out_dir = dir.to_path_buf(),
            CommandConfig::Forecast(c) => c.out_dir = dir.to_path_buf(),
        }
    }
    let manifest = run(config)?;
    let matches = manifest.outputs == previous.outputs;
    Ok((manifest, matches))
}

fn retarget(output: &mut PathBuf, dir: &Path) {
    let name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "output".into());
    *output = dir.join(name);
}

fn execute_synth(cmd: SynthCmd) -> Result<RunManifest> {
    let config = synth::SynthConfig {
        kpi: cmd.kpi,
        n_cells: cmd.cells,
        n_weeks: cmd.weeks,
        seed: cmd.seed,
        daily_amplitude: cmd.daily_amplitude,
        weekly_amplitude: cmd.weekly_amplitude,
        noise_std: cmd.noise_std,
        cell_scale_lognormal_sigma: cmd.scale_sigma,
        inter_cell_pattern_correlation: cmd.correlation,
    };
    let dataset = synth::generate(&config)?;

    let mut csv = Vec::new();
    kpi_model::write_csv(&dataset, &mut csv)?;
    let dir = cmd.output.parent().unwrap_or(Path::new("")).to_path_buf();
    let name = file_name(&cmd.output)?;
    let outputs = vec![write_output(&dir, &name, &csv)?];

    let manifest = RunManifest::new(CommandConfig::Synth(cmd.clone()), outputs);
    manifest.save(&manifest_path_for(&cmd.output))?;
    Ok(manifest)
}

fn execute_rd(mut cmd: RdCmd) -> Result<RunManifest> {
    let dataset = load_dataset(&cmd.input, cmd.kpi)?;
    std::fs::create_dir_all(&cmd.out_dir)?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();

    let mut names = canonical_codecs(&cmd.codecs)?;
    names.dedup();
    cmd.codecs = names.iter().map(|s| s.to_string()).collect();

    let mut codec_kinds = Vec::new();
    for name in &names {
        let (codec, basis) = build_codec(name, &dataset, cmd.klt_fraction, cmd.seed)?;
        if let Some(basis) = basis {
            outputs.push(write_output(
                &cmd.out_dir,
                "klt_basis.json",
                &serde_json::to_vec(&*basis)?,
            )?);
            notes.push(format!(
                "klt basis (168x168) is shared side information, not counted in the rate; \
                 its {} training cells are excluded from evaluation for all codecs",
                basis.training_cell_ids().len()
            ));
        }
        codec_kinds.push(codec);
    }

    let deltas = resolve_deltas(&cmd.deltas, &dataset)?;
    cmd.deltas = Some(deltas.clone());

    let points = rd_sweep(&dataset, &codec_kinds, &deltas)?;

    let mut csv = Vec::new();
    write_rd_csv(&points, &mut csv)?;
    outputs.push(write_output(&cmd.out_dir, "rd_points.csv", &csv)?);

    let mut side_info = BTreeMap::new();
    for name in &names {
        let bits = if *name == "dpcm" {
            codecs::SIDE_INFO_BITS / dataset.len() as f64
        } else {
            0.0
        };
        side_info.insert(name.to_string(), bits);
    }
    if names.iter().any(|n| *n == "dpcm") {
        notes.push(
            "dpcm initial samples travel uncoded; their amortized cost is listed under \
             side_info_bits_per_sample, not folded into the entropy rate"
                .to_string(),
        );
    }

    let config = CommandConfig::Rd(cmd.clone());
    let report = serde_json::json!({
        "config": provenance_view(&config),
        "notes": notes,
        "side_info_bits_per_sample": side_info,
        "points": points,
    });
    outputs.push(write_output(
        &cmd.out_dir,
        "rd_report.json",
        &serde_json::to_vec_pretty(&report)?,
    )?);

    if cmd.svg {
        let mut chart = Chart::new(
            &format!("Rate-distortion, {} ({})", cmd.kpi.token(), cmd.kpi.unit()),
            "rate [bits/sample]",
            "SNR [dB]",
        );
        for name in &names {
            let series: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.codec == *name)
                .map(|p| (p.rate_bits_per_sample, p.snr_db))
                .collect();
            chart.add_series(name, series);
        }
        outputs.push(write_output(
            &cmd.out_dir,
            "rd_points.svg",
            chart.render().as_bytes(),
        )?);
    }

    let manifest = RunManifest::new(config, outputs);
    manifest.save(&cmd.out_dir.join("rd.manifest.json"))?;
    Ok(manifest)
}

fn execute_aggregate(mut cmd: AggregateCmd) -> Result<RunManifest> {
    let dataset = load_dataset(&cmd.input, cmd.kpi)?;
    std::fs::create_dir_all(&cmd.out_dir)?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();

    let (codec, basis) = build_codec(&cmd.codec, &dataset, cmd.klt_fraction, cmd.seed)?;
    if let Some(basis) = basis {
        outputs.push(write_output(
            &cmd.out_dir,
            "klt_basis.json",
            &serde_json::to_vec(&*basis)?,
        )?);
        notes.push(format!(
            "klt training cells ({}) excluded from subset sampling",
            basis.training_cell_ids().len()
        ));
    }
    let deltas = resolve_deltas(&cmd.deltas, &dataset)?;
    cmd.deltas = Some(deltas.clone());

    let result = aggregation_experiment(
        &dataset,
        &codec,
        &deltas,
        &cmd.n_values,
        cmd.replicates,
        cmd.seed,
        true,
    )?;
    for warning in &result.warnings {
        eprintln!("kpicomp: warning: {warning}");
        notes.push(warning.clone());
    }

    let mut csv = Vec::new();
    write_aggregation_csv(&result.points, &mut csv)?;
    outputs.push(write_output(&cmd.out_dir, "aggregation_points.csv", &csv)?);

    let config = CommandConfig::Aggregate(cmd.clone());
    let report = serde_json::json!({
        "config": provenance_view(&config),
        "notes": notes,
        "points": result.points,
    });
    outputs.push(write_output(
        &cmd.out_dir,
        "aggregation_report.json",
        &serde_json::to_vec_pretty(&report)?,
    )?);

    if cmd.svg {
        let mut chart = Chart::new(
            &format!("Aggregation fidelity, {}", cmd.kpi.token()),
            "mean per-cell SNR [dB]",
            "aggregate SNR [dB]",
        );
        let mut by_n: BTreeMap<usize, BTreeMap<u64, Vec<&AggregationPoint>>> = BTreeMap::new();
        for p in &result.points {
            by_n
                .entry(p.n_cells)
                .or_default()
                .entry(p.delta.to_bits())
                .or_default()
                .push(p);
        }
        for (n, by_delta) in by_n {
            let series: Vec<(f64, f64)> = by_delta
                .values()
                .map(|pts| {
                    let k = pts.len() as f64;
                    (
                        pts.iter().map(|p| p.mean_per_cell_snr_db).sum::<f64>() / k,
                        pts.iter().map(|p| p.aggregate_snr_db).sum::<f64>() / k,
                    )
                })
                .collect();
            chart.add_series(&format!("N={n}"), series);
        }
        outputs.push(write_output(
            &cmd.out_dir,
            "aggregation_points.svg",
            chart.render().as_bytes(),
        )?);
    }

    let manifest = RunManifest::new(config, outputs);
    manifest.save(&cmd.out_dir.join("aggregate.manifest.json"))?;
    Ok(manifest)
}

fn execute_forecast(mut cmd: ForecastCmd) -> Result<RunManifest> {
    let dataset = load_dataset(&cmd.input, cmd.kpi)?;
    std::fs::create_dir_all(&cmd.out_dir)?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();

    let (codec, basis) = build_codec(&cmd.codec, &dataset, cmd.klt_fraction, cmd.seed)?;
    if let Some(basis) = basis {
        outputs.push(write_output(
            &cmd.out_dir,
            "klt_basis.json",
            &serde_json::to_vec(&*basis)?,
        )?);
        notes.push(format!(
            "klt training cells ({}) excluded from forecasting",
            basis.training_cell_ids().len()
        ));
    }
    notes.push("only the 3-week history is compressed; RMSE is measured against the uncompressed target week".to_string());
    let deltas = resolve_deltas(&cmd.deltas, &dataset)?;
    cmd.deltas = Some(deltas.clone());

    let points = forecasting_experiment(&dataset, &deltas, &codec, cmd.clip)?;

    let mut csv = Vec::new();
    write_forecast_csv(&points, &mut csv)?;
    outputs.push(write_output(&cmd.out_dir, "forecast_points.csv", &csv)?);

    let config = CommandConfig::Forecast(cmd.clone());
    let report = serde_json::json!({
        "config": provenance_view(&config),
        "notes": notes,
        "baseline_rmse": points.iter().find(|p| p.delta.is_none()).map(|p| p.mean_rmse),
        "rmse_unit": cmd.kpi.unit(),
        "points": points,
    });
    outputs.push(write_output(
        &cmd.out_dir,
        "forecast_report.json",
        &serde_json::to_vec_pretty(&report)?,
    )?);

    if cmd.svg {
        let mut chart = Chart::new(
            &format!("MWS forecasting, {} (RMSE in {})", cmd.kpi.token(), cmd.kpi.unit()),
            "mean per-cell history SNR [dB]",
            "mean RMSE",
        );
        let compressed: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.delta.is_some())
            .map(|p| (p.mean_per_cell_snr_db, p.mean_rmse))
            .collect();
        if let Some(baseline) = points.iter().find(|p| p.delta.is_none()) {
            let xs: Vec<f64> = compressed.iter().map(|p| p.0).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi.is_finite() {
                chart.add_series(
                    "uncompressed baseline",
                    vec![(lo, baseline.mean_rmse), (hi, baseline.mean_rmse)],
                );
            }
        }
        chart.add_series(&cmd.codec, compressed);
        outputs.push(write_output(
            &cmd.out_dir,
            "forecast_points.svg",
            chart.render().as_bytes(),
        )?);
    }

    let manifest = RunManifest::new(config, outputs);
    manifest.save(&cmd.out_dir.join("forecast.manifest.json"))?;
    Ok(manifest)
}

fn execute_roundtrip(cmd: RoundtripCmd) -> Result<RunManifest> {
    let dataset = load_dataset(&cmd.input, cmd.kpi)?;
    let dir = cmd.output.parent().unwrap_or(Path::new("")).to_path_buf();
    let artifact_name = file_name(&cmd.output)?;
    let mut outputs = Vec::new();

    let (codec, basis) = build_codec(&cmd.codec, &dataset, cmd.klt_fraction, cmd.seed)?;
    if let Some(basis) = &basis {
        outputs.push(write_output(
            &dir,
            &format!("{artifact_name}.klt_basis.json"),
            &serde_json::to_vec(&**basis)?,
        )?);
    }

    let quant = QuantizerConfig::new(cmd.delta)
        .map_err(|e| anyhow::anyhow!("invalid --delta: {e}"))?;
    let run = codecs::run_codec(&dataset, &codec, &quant)?;

    let mut artifact = Vec::new();
    codecs::write_artifact(
        &mut artifact,
        cmd.kpi.token(),
        &format_hour_timestamp(dataset.start_timestamp()),
        dataset.len(),
        &run.results,
    )?;
    outputs.push(write_output(&dir, &artifact_name, &artifact)?);

    // Decode from the serialized bytes and verify against the in-memory
    // reconstructions; any mismatch is a corruption bug.
    let decoded = codecs::read_artifact(artifact.as_slice(), basis.clone())?;
    if decoded.cells.len() != run.results.len() {
        bail!("decode mismatch: cell count differs");
    }
    for (result, (cell_id, reconstruction)) in run.results.iter().zip(&decoded.cells) {
        if &result.cell_id != cell_id {
            bail!("decode mismatch: cell order differs at {cell_id}");
        }
        let same = result.reconstruction.len() == reconstruction.len()
            && result
                .reconstruction
                .iter()
                .zip(reconstruction)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            bail!("decode mismatch: reconstruction differs for cell {cell_id}");
        }
    }

    let decoded_cells: Vec<kpi_model::CellSeries> = decoded
        .cells
        .iter()
        .map(|(id, samples)| kpi_model::CellSeries {
            cell_id: id.clone(),
            kpi: cmd.kpi,
            samples: samples.clone(),
            start_timestamp: dataset.start_timestamp(),
        })
        .collect();
    let decoded_dataset = Dataset::new(cmd.kpi, decoded_cells)?;
    let mut decoded_csv = Vec::new();
    kpi_model::write_csv(&decoded_dataset, &mut decoded_csv)?;
    outputs.push(write_output(
        &dir,
        &format!("{artifact_name}.decoded.csv"),
        &decoded_csv,
    )?);

    let rate = run.rate.bits_per_sample;
    let compression_factor = if rate > 0.0 { Some(32.0 / rate) } else { None };
    let config = CommandConfig::Roundtrip(cmd.clone());
    let report = serde_json::json!({
        "config": provenance_view(&config),
        "decode_matches": true,
        "bits_per_sample": rate,
        "side_info_bits_per_sample": run.side_info_bits_per_sample,
        "compression_factor_vs_f32": compression_factor,
        "eligible_cells": run.eligible_cell_count,
        "samples_per_cell": dataset.len(),
        "artifact_bytes": artifact.len(),
    });
    outputs.push(write_output(
        &dir,
        &format!("{artifact_name}.report.json"),
        &serde_json::to_vec_pretty(&report)?,
    )?);

    println!("decode matches: true");
    let manifest = RunManifest::new(config, outputs);
    manifest.save(&manifest_path_for(&cmd.output))?;
    Ok(manifest)
}

fn load_dataset(input: &Path, kpi: KpiKind) -> Result<Dataset> {
    kpi_model::load_csv(input, kpi)
        .with_context(|| format!("loading {} (kpi {})", input.display(), kpi.token()))
}

/// Config as embedded in reports: output-location fields are dropped so a
/// redirected re-run still reproduces report bytes exactly.
fn provenance_view(config: &CommandConfig) -> serde_json::Value {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("out_dir");
        map.remove("output");
    }
    value
}

fn resolve_deltas(deltas: &Option<Vec<f64>>, dataset: &Dataset) -> Result<Vec<f64>> {
    match deltas {
        Some(d) => Ok(d.clone()),
        None => Ok(default_delta_ladder(dataset)?),
    }
}

/// Order requested codec names canonically (pcm, dpcm, dct, klt).
pub fn canonical_codecs(names: &[String]) -> Result<Vec<&'static str>> {
    let mut out = Vec::new();
    for canonical in CODEC_NAMES {
        if names.iter().any(|n| n == canonical) {
            out.push(canonical);
        }
    }
    for name in names {
        if !CODEC_NAMES.contains(&name.as_str()) {
            bail!("unknown codec {name:?}; expected one of {}", CODEC_NAMES.join(", "));
        }
    }
    Ok(out)
}

fn build_codec(
    name: &str,
    dataset: &Dataset,
    klt_fraction: f64,
    seed: u64,
) -> Result<(CodecKind, Option<Arc<KltBasis>>)> {
    match name {
        "pcm" => Ok((CodecKind::Pcm, None)),
        "dpcm" => Ok((CodecKind::Dpcm, None)),
        "dct" => Ok((CodecKind::Dct, None)),
        "klt" => {
            let basis = Arc::new(
                train_klt(dataset, klt_fraction, seed).with_context(|| {
                    format!(
                        "training the KLT on {} cells at fraction {klt_fraction}",
                        dataset.n_cells()
                    )
                })?,
            );
            Ok((CodecKind::Klt(basis.clone()), Some(basis)))
        }
        other => bail!("unknown codec {other:?}; expected one of {}", CODEC_NAMES.join(", ")),
    }
}

fn file_name(path: &Path) -> Result<String> {
    Ok(path
        .file_name()
        .ok_or_else(|| anyhow::anyhow!("output path {} has no file name", path.display()))?
        .to_string_lossy()
        .into_owned())
}
