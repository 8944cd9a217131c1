//! Distortion and fidelity measures: MSE, pooled and per-cell SNR, RMSE.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sentinel for zero-MSE (or otherwise off-scale) reconstructions, so sweep
/// outputs never contain non-finite values.
pub const SNR_CAP_DB: f64 = 300.0;

/// SNR in dB together with the quantities it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrReport {
    /// `10 * log10(signal_variance / mse)`, capped at [`SNR_CAP_DB`].
    pub snr_db: f64,
    pub mse: f64,
    pub signal_variance: f64,
}

/// SNR pooled over a whole collection of cells: population variance around
/// the grand mean of all original samples over pooled MSE.
pub fn pooled_snr(originals: &[&[f64]], reconstructions: &[&[f64]]) -> Result<SnrReport> {
    if originals.len() != reconstructions.len()
        || originals
            .iter()
            .zip(reconstructions)
            .any(|(o, r)| o.len() != r.len())
    {
        return Err(Error::ShapeMismatch);
    }
    let total: usize = originals.iter().map(|o| o.len()).sum();
    if total < 2 {
        return Err(Error::ShapeMismatch);
    }

    let grand_mean =
        originals.iter().flat_map(|o| o.iter()).sum::<f64>() / total as f64;
    let mut var_sum = 0.0;
    let mut err_sum = 0.0;
    for (orig, recon) in originals.iter().zip(reconstructions) {
        for (&x, &y) in orig.iter().zip(recon.iter()) {
            var_sum += (x - grand_mean) * (x - grand_mean);
            err_sum += (x - y) * (x - y);
        }
    }
    let signal_variance = var_sum / total as f64;
    let mse = err_sum / total as f64;
    if signal_variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let snr_db = if mse == 0.0 {
        SNR_CAP_DB
    } else {
        (10.0 * (signal_variance / mse).log10()).min(SNR_CAP_DB)
    };
    Ok(SnrReport {
        snr_db,
        mse,
        signal_variance,
    })
}

/// SNR of a single cell's reconstruction.
pub fn per_cell_snr(original: &[f64], reconstruction: &[f64]) -> Result<SnrReport> {
    pooled_snr(&[original], &[reconstruction])
}

/// Arithmetic mean of per-cell SNRs in dB, skipping zero-variance cells.
/// Returns `(mean_db, excluded_cell_count)`.
pub fn mean_per_cell_snr(pairs: &[(&[f64], &[f64])]) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for (orig, recon) in pairs {
        match per_cell_snr(orig, recon) {
            Ok(report) => {
                sum += report.snr_db;
                included += 1;
            }
            Err(Error::ZeroVariance) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if included == 0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sum / included as f64, excluded))
}

/// Root mean square error between two equal-length vectors.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::ShapeMismatch);
    }
    let sum: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sum / predicted.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_reconstruction_hits_the_cap() {
        let x = [1.0, 2.0, 3.0];
        let r = per_cell_snr(&x, &x).unwrap();
        assert_eq!(r.snr_db, SNR_CAP_DB);
        assert_eq!(r.mse, 0.0);
    }

    #[test]
    fn constant_offset_equal_to_std_gives_zero_db() {
        // Var(x) = c^2 and recon = x + c => MSE = c^2 => SNR = 0 dB.
        let c = 2.0;
        let x = [0.0, c * 2.0, 0.0, c * 2.0]; // variance c^2
        let recon: Vec<f64> = x.iter().map(|v| v + c).collect();
        let r = per_cell_snr(&x, &recon).unwrap();
        assert!((r.signal_variance - c * c).abs() < 1e-12);
        assert!(r.snr_db.abs() < 1e-9);
    }

    #[test]
    fn two_point_example() {
        let r = per_cell_snr(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!((r.signal_variance - 1.0).abs() < 1e-12);
        assert!((r.mse - 1.0).abs() < 1e-12);
        assert!(r.snr_db.abs() < 1e-9);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(matches!(
            per_cell_snr(&[5.0, 5.0, 5.0], &[5.0, 5.1, 4.9]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(
            pooled_snr(&[&[1.0, 2.0]], &[&[1.0]]),
            Err(Error::ShapeMismatch)
        ));
        assert!(matches!(
            pooled_snr(&[&[1.0, 2.0], &[1.0]], &[&[1.0, 2.0]]),
            Err(Error::ShapeMismatch)
        ));
    }

    #[test]
    fn mean_per_cell_skips_constant_cells() {
        let a = [0.0, 2.0];
        let ar = [1.0, 1.0]; // 0 dB
        let flat = [4.0, 4.0];
        let flat_r = [4.0, 4.0];
        let (mean, excluded) =
            mean_per_cell_snr(&[(&a, &ar), (&flat, &flat_r)]).unwrap();
        assert!(mean.abs() < 1e-9);
        assert_eq!(excluded, 1);
    }

    #[test]
    fn pooled_over_one_cell_equals_per_cell() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let y = [3.1, 0.8, 4.2, 1.1, 4.9, 9.3];
        let pooled = pooled_snr(&[&x], &[&y]).unwrap();
        let single = per_cell_snr(&x, &y).unwrap();
        assert!((pooled.snr_db - single.snr_db).abs() < 1e-12);
        assert!((pooled.mse - single.mse).abs() < 1e-12);
    }

    // Monte Carlo oracle: white signal of variance 100 with independent
    // errors of variance 0.1 must land near 30 dB.
    #[test]
    fn monte_carlo_thirty_db() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let signal = Normal::new(0.0, 10.0).unwrap();
        let noise = Normal::new(0.0, 0.1f64.sqrt()).unwrap();
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| signal.sample(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let r = per_cell_snr(&x, &y).unwrap();
        assert!(
            (r.snr_db - 30.0).abs() < 0.5,
            "expected ~30 dB, got {}",
            r.snr_db
        );
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - (25.0f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariance(
            scale in 1e-3f64..1e3,
            data in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 4..64),
        ) {
            let x: Vec<f64> = data.iter().map(|(a, _)| *a).collect();
            let y: Vec<f64> = data.iter().map(|(a, b)| a + b * 0.01).collect();
            prop_assume!(per_cell_snr(&x, &y).is_ok());
            let base = per_cell_snr(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let scaled = per_cell_snr(&xs, &ys).unwrap();
            prop_assert!((base.snr_db - scaled.snr_db).abs() < 1e-6);

            let r = rmse(&x, &y).unwrap();
            let rs = rmse(&xs, &ys).unwrap();
            prop_assert!((rs - r * scale).abs() <= 1e-9 * rs.max(1.0));

            prop_assert!((rmse(&x, &y).unwrap() - rmse(&y, &x).unwrap()).abs() < 1e-15);
        }
    }
}
