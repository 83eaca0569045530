use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DsrError, Result};
use crate::sampling::Measurements;
use crate::volume::Volume;

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `10 log10(|ref|^2 / |ref - est|^2)`. Returns `f64::INFINITY` when the
/// estimate is exact.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(DsrError::dims(format!(
            "snr: reference has {} values, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let signal = sum_sq(reference);
    if signal == 0.0 {
        return Err(DsrError::data("snr: reference signal is zero"));
    }
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// SNR of each frame of `estimate` against the matching frame of `reference`.
pub fn per_frame_snr_db(reference: &Volume, estimate: &Volume) -> Result<Vec<f64>> {
    estimate.ensure_dims(reference.dims(), "per-frame snr")?;
    (0..reference.dims().frames)
        .map(|t| snr_db(reference.frame(t), estimate.frame(t)))
        .collect()
}

/// Per-sample noise standard deviation that yields `snr_db` on `values`.
pub fn noise_sigma_for(values: &[f64], snr_db: f64) -> f64 {
    if values.is_empty() || !snr_db.is_finite() {
        return 0.0;
    }
    (sum_sq(values) / values.len() as f64).sqrt() * 10f64.powf(-snr_db / 20.0)
}

/// Adds seeded white Gaussian noise scaled so that the realized SNR against
/// the clean measurements is exactly `target_snr_db`. `f64::INFINITY`
/// disables noise.
pub fn add_noise(m: &Measurements, target_snr_db: f64, seed: u64) -> Result<Measurements> {
    if target_snr_db.is_nan() || target_snr_db == f64::NEG_INFINITY {
        return Err(DsrError::arg(format!("invalid target SNR {target_snr_db}")));
    }
    let signal = sum_sq(m.values());
    if signal == 0.0 {
        return Err(DsrError::data("cannot set SNR of all-zero measurements"));
    }
    if target_snr_db == f64::INFINITY {
        return Ok(m.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..m.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw = sum_sq(&noise);
    if raw == 0.0 {
        return Err(DsrError::Numeric("degenerate noise draw".into()));
    }
    let scale = (signal / raw / 10f64.powf(target_snr_db / 10.0)).sqrt();
    for (e, v) in noise.iter_mut().zip(m.values()) {
        *e = v + *e * scale;
    }
    Ok(m.with_values(noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{apply_sampling, SamplingOperator};
    use crate::volume::FrameDims;

    fn measurements() -> Measurements {
        let d = FrameDims::new(8, 8, 2).unwrap();
        let vol = Volume::from_fn(d, |x, y, t| {
            1.0 + 0.1 * x as f64 + 0.05 * y as f64 + t as f64
        });
        apply_sampling(&SamplingOperator::decimation(d, 2).unwrap(), &vol).unwrap()
    }

    #[test]
    fn snr_definition_cases() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(snr_db(&r, &r).unwrap(), f64::INFINITY);

        let mut ref1 = vec![0.0; 5];
        ref1[0] = 1.0;
        assert!((snr_db(&ref1, &[0.0; 5]).unwrap() - 0.0).abs() < 1e-15);

        // error norm one tenth of signal norm
        let r = [3.0, 4.0];
        let e = [3.0 + 0.3, 4.0 + 0.4];
        assert!((snr_db(&r, &e).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn snr_errors() {
        assert!(snr_db(&[1.0], &[1.0, 2.0]).is_err());
        assert!(snr_db(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn noise_hits_target_snr_exactly() {
        let m = measurements();
        for target in [0.0, 10.0, 30.0, 55.5] {
            let noisy = add_noise(&m, target, 42).unwrap();
            let got = snr_db(m.values(), noisy.values()).unwrap();
            assert!((got - target).abs() < 1e-9, "{got} vs {target}");
        }
    }

    #[test]
    fn noise_is_seeded() {
        let m = measurements();
        let a = add_noise(&m, 30.0, 5).unwrap();
        let b = add_noise(&m, 30.0, 5).unwrap();
        let c = add_noise(&m, 30.0, 6).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn infinite_snr_disables_noise() {
        let m = measurements();
        assert_eq!(add_noise(&m, f64::INFINITY, 0).unwrap(), m);
    }

    #[test]
    fn zero_measurements_rejected() {
        let d = FrameDims::new(2, 2, 1).unwrap();
        let m = apply_sampling(&SamplingOperator::full(d), &Volume::zeros(d)).unwrap();
        assert!(add_noise(&m, 30.0, 0).is_err());
    }

    #[test]
    fn sigma_matches_realized_noise_power() {
        let m = measurements();
        let sigma = noise_sigma_for(m.values(), 30.0);
        let noisy = add_noise(&m, 30.0, 1).unwrap();
        let realized: f64 = m
            .values()
            .iter()
            .zip(noisy.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / m.len() as f64;
        assert!((realized.sqrt() - sigma).abs() < 1e-12);
    }
}
