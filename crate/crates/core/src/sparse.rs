//! Random sparse sampling with a reconstruction/validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DsrError, Result};
use crate::sampling::{apply_sampling, Measurements, SamplingOperator};
use crate::volume::Volume;

/// `(sampled, reconstruction)` counts for `rate` over `voxels`.
pub fn sample_counts(voxels: usize, rate: f64, split: f64) -> Result<(usize, usize)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(DsrError::arg(format!(
            "rate must lie in (0, 1], got {rate}"
        )));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(DsrError::arg(format!(
            "split must lie in (0, 1), got {split}"
        )));
    }
    let total = (rate * voxels as f64).floor() as usize;
    if total < 2 {
        return Err(DsrError::arg(format!(
            "rate {rate} keeps only {total} of {voxels} voxels"
        )));
    }
    Ok((total, split_count(total, split)))
}

/// Reconstruction share of `total` points, at least one on each side.
pub fn split_count(total: usize, split: f64) -> usize {
    ((split * total as f64).floor() as usize).clamp(1, total - 1)
}

/// Samples `⌊rate·NT⌋` voxels uniformly without replacement and splits them
/// into disjoint reconstruction and validation masks.
pub fn sparse_split(
    vol: &Volume,
    rate: f64,
    split: f64,
    seed: u64,
) -> Result<(Measurements, Measurements)> {
    let dims = vol.dims();
    let (total, n_recon) = sample_counts(dims.len(), rate, split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, dims.len(), total).into_vec();
    picked.shuffle(&mut rng);

    let mut recon = vec![false; dims.len()];
    let mut valid = vec![false; dims.len()];
    for (k, &i) in picked.iter().enumerate() {
        if k < n_recon {
            recon[i] = true;
        } else {
            valid[i] = true;
        }
    }
    let recon = apply_sampling(&SamplingOperator::mask(dims, recon)?, vol)?;
    let valid = apply_sampling(&SamplingOperator::mask(dims, valid)?, vol)?;
    Ok((recon, valid))
}
