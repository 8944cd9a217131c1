//! Cross-module flows: synthetic data through training, codecs and the
//! experiment suite.

use std::sync::Arc;

use kpicomp_core::codecs::CodecKind;
use kpicomp_core::experiments::{default_delta_ladder, interpolate_snr_at, rd_sweep, RdPoint};
use kpicomp_core::kpi_model::{self, to_weekly_blocks, KpiKind};
use kpicomp_core::metrics;
use kpicomp_core::synth::{generate, SynthConfig};
use kpicomp_core::transforms::{build_dct, train_klt, Transform};
use kpicomp_core::WEEK_HOURS;

fn snr_at(points: &[RdPoint], codec: &str, rate: f64) -> Option<f64> {
    let curve: Vec<RdPoint> = points.iter().filter(|p| p.codec == codec).cloned().collect();
    interpolate_snr_at(&curve, rate)
}

#[test]
fn synthetic_csv_survives_a_write_read_cycle_bit_exactly() {
    let ds = generate(&SynthConfig {
        n_cells: 8,
        seed: 21,
        ..SynthConfig::new(KpiKind::PrbOccupancy)
    })
    .unwrap();
    let mut csv = Vec::new();
    kpi_model::write_csv(&ds, &mut csv).unwrap();
    let reloaded = kpi_model::load_csv_reader(csv.as_slice(), KpiKind::PrbOccupancy).unwrap();
    assert_eq!(ds.n_cells(), reloaded.n_cells());
    for (a, b) in ds.cells().iter().zip(reloaded.cells()) {
        assert_eq!(a.cell_id, b.cell_id);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn rd_ordering_holds_on_correlated_synthetic_data() {
    let ds = generate(&SynthConfig {
        n_cells: 80,
        seed: 3,
        ..SynthConfig::new(KpiKind::DownlinkVolume)
    })
    .unwrap();
    let klt = Arc::new(train_klt(&ds, 0.2, 3).unwrap());
    let sigma = ds.pooled_std();
    let deltas: Vec<f64> = (-8..=1).rev().map(|e| sigma * (e as f64).exp2()).collect();
    let codecs = [
        CodecKind::Pcm,
        CodecKind::Dpcm,
        CodecKind::Dct,
        CodecKind::Klt(klt),
    ];
    let points = rd_sweep(&ds, &codecs, &deltas).unwrap();

    for grid in 4..=10 {
        let rate = grid as f64 * 0.5;
        let pcm = snr_at(&points, "pcm", rate);
        let dpcm = snr_at(&points, "dpcm", rate).unwrap();
        let dct = snr_at(&points, "dct", rate).unwrap();
        let klt = snr_at(&points, "klt", rate).unwrap();
        assert!(klt >= dct - 0.5, "rate {rate}: klt {klt} < dct {dct}");
        assert!(dct >= dpcm - 0.5, "rate {rate}: dct {dct} < dpcm {dpcm}");
        if let Some(pcm) = pcm {
            assert!(dpcm >= pcm - 0.5, "rate {rate}: dpcm {dpcm} < pcm {pcm}");
        }
    }
}

#[test]
fn klt_advantage_shrinks_without_shared_structure() {
    let gap_at = |correlation: f64, noise: f64| -> f64 {
        let ds = generate(&SynthConfig {
            n_cells: 60,
            seed: 5,
            noise_std: noise,
            inter_cell_pattern_correlation: correlation,
            ..SynthConfig::new(KpiKind::DownlinkVolume)
        })
        .unwrap();
        let klt = Arc::new(train_klt(&ds, 0.3, 5).unwrap());
        let sigma = ds.pooled_std();
        let deltas: Vec<f64> = (-6..=0).rev().map(|e| sigma * (e as f64).exp2()).collect();
        let points = rd_sweep(
            &ds,
            &[CodecKind::Dct, CodecKind::Klt(klt)],
            &deltas,
        )
        .unwrap();
        snr_at(&points, "klt", 3.0).unwrap() - snr_at(&points, "dct", 3.0).unwrap()
    };

    let correlated_gap = gap_at(0.7, 0.05);
    let control_gap = gap_at(0.0, 1.0);
    assert!(
        control_gap < correlated_gap,
        "noise-dominated control gap {control_gap} should be below the correlated gap {correlated_gap}"
    );
}

#[test]
fn aggregate_snr_dominates_the_worst_cell() {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let ds = generate(&SynthConfig {
        n_cells: 50,
        seed: 9,
        ..SynthConfig::new(KpiKind::DownlinkVolume)
    })
    .unwrap();
    let sigma = ds.pooled_std();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let mut holds = 0;
    let mut total = 0;
    for delta in [sigma / 4.0, sigma / 16.0] {
        let cfg = kpicomp_core::quantizer::QuantizerConfig::new(delta).unwrap();
        let run = kpicomp_core::codecs::run_codec(&ds, &CodecKind::Pcm, &cfg).unwrap();
        for _ in 0..10 {
            let chosen: Vec<usize> = sample(&mut rng, ds.n_cells(), 10).into_iter().collect();
            let t = ds.len();
            let mut s = vec![0.0; t];
            let mut s_hat = vec![0.0; t];
            let mut min_cell_snr = f64::INFINITY;
            for &i in &chosen {
                let cell = &ds.cells()[i];
                let recon = &run.results[i].reconstruction;
                for n in 0..t {
                    s[n] += cell.samples[n];
                    s_hat[n] += recon[n];
                }
                min_cell_snr =
                    min_cell_snr.min(metrics::per_cell_snr(&cell.samples, recon).unwrap().snr_db);
            }
            let aggregate = metrics::per_cell_snr(&s, &s_hat).unwrap().snr_db;
            total += 1;
            if aggregate >= min_cell_snr {
                holds += 1;
            }
        }
    }
    assert!(
        holds * 100 >= total * 95,
        "aggregate SNR beat the worst cell in only {holds}/{total} replicates"
    );
}

#[test]
fn klt_decorrelates_held_out_blocks() {
    let ds = generate(&SynthConfig {
        n_cells: 100,
        seed: 13,
        ..SynthConfig::new(KpiKind::DownlinkVolume)
    })
    .unwrap();
    let basis = train_klt(&ds, 0.3, 13).unwrap();

    let mut cov = vec![vec![0.0f64; WEEK_HOURS]; WEEK_HOURS];
    let mut count = 0usize;
    for cell in ds.cells() {
        if basis.training_cell_ids().contains(&cell.cell_id) {
            continue;
        }
        for block in to_weekly_blocks(cell).unwrap().blocks {
            let coeffs = basis.forward(&block).unwrap();
            for i in 0..WEEK_HOURS {
                for j in 0..WEEK_HOURS {
                    cov[i][j] += coeffs[i] * coeffs[j];
                }
            }
            count += 1;
        }
    }
    assert!(count > 100);

    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..WEEK_HOURS {
        for j in 0..WEEK_HOURS {
            let v = cov[i][j] * cov[i][j];
            if i == j {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    let ratio = off.sqrt() / diag.sqrt();
    assert!(
        ratio < 0.10,
        "held-out coefficient covariance off-diagonal mass ratio {ratio} >= 10%"
    );
}

#[test]
fn klt_compacts_energy_at_least_as_well_as_dct() {
    let ds = generate(&SynthConfig {
        n_cells: 100,
        seed: 17,
        ..SynthConfig::new(KpiKind::DownlinkVolume)
    })
    .unwrap();
    let klt = train_klt(&ds, 0.3, 17).unwrap();
    let dct = build_dct();

    let mut klt_energy = vec![0.0f64; WEEK_HOURS];
    let mut dct_energy = vec![0.0f64; WEEK_HOURS];
    for cell in ds.cells() {
        if klt.training_cell_ids().contains(&cell.cell_id) {
            continue;
        }
        for block in to_weekly_blocks(cell).unwrap().blocks {
            for (i, c) in klt.forward(&block).unwrap().iter().enumerate() {
                klt_energy[i] += c * c;
            }
            for (i, c) in dct.forward(&block).unwrap().iter().enumerate() {
                dct_energy[i] += c * c;
            }
        }
    }

    for k in [1usize, 4, 16] {
        let klt_cum: f64 = klt_energy[..k].iter().sum();
        let dct_cum: f64 = dct_energy[..k].iter().sum();
        assert!(
            klt_cum >= dct_cum,
            "first {k} KLT coefficients hold {klt_cum:.3e}, DCT {dct_cum:.3e}"
        );
    }
}

#[test]
fn default_ladder_covers_the_useful_rate_range() {
    let ds = generate(&SynthConfig {
        n_cells: 30,
        seed: 19,
        ..SynthConfig::new(KpiKind::ActiveUsersRrc)
    })
    .unwrap();
    let ladder = default_delta_ladder(&ds).unwrap();
    let points = rd_sweep(&ds, &[CodecKind::Dct], &ladder).unwrap();
    let min_rate = points
        .iter()
        .map(|p| p.rate_bits_per_sample)
        .fold(f64::INFINITY, f64::min);
    let max_rate = points
        .iter()
        .map(|p| p.rate_bits_per_sample)
        .fold(0.0, f64::max);
    assert!(min_rate < 1.0, "coarsest step still spends {min_rate} bits");
    assert!(max_rate > 10.0, "finest step only reaches {max_rate} bits");
}
