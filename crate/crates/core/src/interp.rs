//! Initializers: bilinear upsampling for decimated data, nearest-sample fill
//! for sparse masks, and RGB to luma conversion for guides.

use crate::error::{DsrError, Result};
use crate::sampling::{Measurements, SamplingKind};
use crate::volume::{FrameDims, IntensityVolume, Volume};

/// Per-frame bilinear interpolation from the decimation grid to the full
/// grid. Past the last sample row/column the edge sample is replicated.
pub fn linear_interpolate(m: &Measurements) -> Result<Volume> {
    let op = m.operator();
    let factor = op.decimation_factor().ok_or_else(|| {
        DsrError::arg("linear_interpolate needs decimation measurements; use mask_fill for masks")
    })?;
    let dims = op.dims();
    let (lw, lh) = op.low_res_size().expect("decimation has a low-res size");
    let low = m.values();

    // Per-axis (lower index, upper index, weight of upper).
    let axis = |n: usize, ln: usize| -> Vec<(usize, usize, f64)> {
        (0..n)
            .map(|p| {
                let i0 = p / factor;
                if i0 + 1 >= ln {
                    (ln - 1, ln - 1, 0.0)
                } else {
                    (i0, i0 + 1, (p - i0 * factor) as f64 / factor as f64)
                }
            })
            .collect()
    };
    let ax = axis(dims.width, lw);
    let ay = axis(dims.height, lh);

    let mut out = Vec::with_capacity(dims.len());
    for t in 0..dims.frames {
        let frame = &low[t * lw * lh..(t + 1) * lw * lh];
        for &(y0, y1, wy) in &ay {
            for &(x0, x1, wx) in &ax {
                let top = frame[y0 * lw + x0] * (1.0 - wx) + frame[y0 * lw + x1] * wx;
                let bot = frame[y1 * lw + x0] * (1.0 - wx) + frame[y1 * lw + x1] * wx;
                out.push(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    Ok(Volume::from_raw(dims, out))
}

/// Fills each unmeasured voxel with the nearest measured voxel of the same
/// frame (Euclidean distance, ties to the earlier voxel in scan order).
pub fn mask_fill(m: &Measurements) -> Result<Volume> {
    let op = m.operator();
    if !matches!(op.kind(), SamplingKind::Mask(_)) {
        return Err(DsrError::arg("mask_fill needs mask measurements"));
    }
    let dims = op.dims();
    let (w, h) = (dims.width, dims.height);
    let n = dims.frame_len();

    let mut known: Vec<Option<f64>> = vec![None; dims.len()];
    for (&i, &v) in op.indices().iter().zip(m.values()) {
        known[i] = Some(v);
    }

    let mut out = vec![0.0; dims.len()];
    for t in 0..dims.frames {
        let frame = &known[t * n..(t + 1) * n];
        if frame.iter().all(Option::is_none) {
            return Err(DsrError::data(format!("frame {t} has no measurements")));
        }
        let max_r = w.max(h) as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                // Ring search by Chebyshev radius; a ring at radius r cannot
                // hold anything closer than r, so stop once r^2 exceeds the best.
                let mut best: Option<(i64, usize)> = None;
                for r in 0..=max_r {
                    if let Some((d2, _)) = best {
                        if r * r > d2 {
                            break;
                        }
                    }
                    let mut visit = |px: i64, py: i64| {
                        if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                            return;
                        }
                        let idx = py as usize * w + px as usize;
                        if frame[idx].is_some() {
                            let d2 = (px - x).pow(2) + (py - y).pow(2);
                            if best.is_none_or(|b| (d2, idx) < b) {
                                best = Some((d2, idx));
                            }
                        }
                    };
                    if r == 0 {
                        visit(x, y);
                        continue;
                    }
                    for dx in -r..=r {
                        visit(x + dx, y - r);
                        visit(x + dx, y + r);
                    }
                    for dy in -r + 1..r {
                        visit(x - r, y + dy);
                        visit(x + r, y + dy);
                    }
                }
                let (_, idx) = best.expect("frame has at least one measurement");
                out[t * n + y as usize * w + x as usize] = frame[idx].unwrap();
            }
        }
    }
    Ok(Volume::from_raw(dims, out))
}

/// ITU-R BT.601 luma of interleaved per-pixel channel data in `[0, 1]`.
pub fn luma(dims: FrameDims, channels: usize, data: &[f64]) -> Result<IntensityVolume> {
    if channels != 3 {
        return Err(DsrError::arg(format!(
            "luma needs 3 channels, got {channels}"
        )));
    }
    if data.len() != 3 * dims.len() {
        return Err(DsrError::dims(format!(
            "rgb data for {dims} needs {} values, got {}",
            3 * dims.len(),
            data.len()
        )));
    }
    let values = data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
        .collect();
    IntensityVolume::new(dims, values)
}
