// Dev probe: acceptance-shaped checks on the default synthetic dataset.
use std::sync::Arc;
use std::time::Instant;

use kpicomp_core::codecs::CodecKind;
use kpicomp_core::experiments::{
    aggregation_experiment, default_delta_ladder, forecasting_experiment, interpolate_snr_at,
    rd_sweep,
};
use kpicomp_core::kpi_model::KpiKind;
use kpicomp_core::synth::{generate, SynthConfig};
use kpicomp_core::transforms::train_klt;

fn main() {
    let t0 = Instant::now();
    let ds = generate(&SynthConfig::new(KpiKind::DownlinkVolume)).unwrap();
    println!("dataset: {} cells, T={} std={:.3}", ds.n_cells(), ds.len(), ds.pooled_std());
    let klt = Arc::new(train_klt(&ds, 0.1, 0).unwrap());
    println!("klt trained on {} cells in {:?}", klt.training_cell_ids().len(), t0.elapsed());
    println!("top eigenvalues: {:?}", &klt.eigenvalues()[..6]);

    let ladder = default_delta_ladder(&ds).unwrap();
    let codecs = [
        CodecKind::Pcm,
        CodecKind::Dpcm,
        CodecKind::Dct,
        CodecKind::Klt(klt.clone()),
    ];
    let t1 = Instant::now();
    let points = rd_sweep(&ds, &codecs, &ladder).unwrap();
    println!("sweep took {:?}", t1.elapsed());
    for p in &points {
        println!(
            "{:5} delta={:12.6} rate={:7.4} snr={:8.3}",
            p.codec, p.delta, p.rate_bits_per_sample, p.snr_db
        );
    }

    println!("\n-- interpolated ordering on [1,6] grid --");
    for grid in 2..=12 {
        let rate = grid as f64 * 0.5;
        let at = |label: &str| {
            let pts: Vec<_> = points.iter().filter(|p| p.codec == label).cloned().collect();
            interpolate_snr_at(&pts, rate)
        };
        println!(
            "rate={:4.1}  pcm={:?} dpcm={:?} dct={:?} klt={:?}",
            rate,
            at("pcm").map(|v| (v * 100.0).round() / 100.0),
            at("dpcm").map(|v| (v * 100.0).round() / 100.0),
            at("dct").map(|v| (v * 100.0).round() / 100.0),
            at("klt").map(|v| (v * 100.0).round() / 100.0)
        );
    }

    println!("\n-- aggregation gains (pcm, delta = sigma/8) --");
    let sigma = ds.pooled_std();
    let t2 = Instant::now();
    for codec in [CodecKind::Pcm, CodecKind::Klt(klt.clone())] {
        let agg = aggregation_experiment(&ds, &codec, &[sigma / 8.0], &[10, 100], 10, 0, true)
            .unwrap();
        for n in [10usize, 100] {
            let pts: Vec<_> = agg.points.iter().filter(|p| p.n_cells == n).collect();
            let mean_gain: f64 = pts
                .iter()
                .map(|p| p.aggregate_snr_db - p.mean_per_cell_snr_db)
                .sum::<f64>()
                / pts.len() as f64;
            println!("{} N={:4} mean gain = {:.2} dB", codec.label(), n, mean_gain);
        }
    }
    println!("aggregation took {:?}", t2.elapsed());

    println!("\n-- forecasting (klt) --");
    let t3 = Instant::now();
    let fc = forecasting_experiment(&ds, &ladder, &CodecKind::Klt(klt), false).unwrap();
    let baseline = fc[0].mean_rmse;
    println!("baseline rmse = {baseline:.4}");
    for p in &fc[1..] {
        println!(
            "delta={:12.6} snr={:8.3} rmse={:10.4} rel={:+.6}",
            p.delta.unwrap(),
            p.mean_per_cell_snr_db,
            p.mean_rmse,
            (p.mean_rmse - baseline) / baseline
        );
    }
    println!("forecast took {:?}", t3.elapsed());
    println!("total {:?}", t0.elapsed());
}
