use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};

/// Spatial and temporal extent of a space-time volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl FrameDims {
    pub fn new(width: usize, height: usize, frames: usize) -> Result<Self> {
        if width == 0 || height == 0 || frames == 0 {
            return Err(DsrError::arg(format!(
                "volume dimensions must be positive, got {width}x{height}x{frames}"
            )));
        }
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    /// Pixels per frame.
    #[inline]
    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    /// Total voxel count.
    #[inline]
    pub fn len(&self) -> usize {
        self.frame_len() * self.frames
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of `(x, y, t)`; frame-major, then row-major.
    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        t * self.frame_len() + y * self.width + x
    }

    /// Inverse of [`FrameDims::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let n = self.frame_len();
        let t = index / n;
        let r = index % n;
        (r % self.width, r / self.width, t)
    }
}

impl std::fmt::Display for FrameDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.frames)
    }
}

/// Dense real-valued space-time field, laid out as `t * W * H + y * W + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: FrameDims,
    data: Vec<f64>,
}

/// Depth sequences are plain volumes in scene units.
pub type DepthVolume = Volume;

impl Volume {
    pub fn new(dims: FrameDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(DsrError::dims(format!(
                "volume {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DsrError::data(format!("non-finite value at voxel {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: FrameDims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: FrameDims, value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: FrameDims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    data.push(f(x, y, t));
                }
            }
        }
        Self { dims, data }
    }

    /// Wraps data without the finiteness scan. Caller guarantees length.
    pub(crate) fn from_raw(dims: FrameDims, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.dims.index(x, y, t)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub(crate) fn ensure_dims(&self, dims: FrameDims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(DsrError::dims(format!(
                "{what}: expected {dims}, got {}",
                self.dims
            )));
        }
        Ok(())
    }
}

/// Guide intensity video with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume(Volume);

impl IntensityVolume {
    pub fn new(dims: FrameDims, data: Vec<f64>) -> Result<Self> {
        Self::try_from(Volume::new(dims, data)?)
    }

    pub fn as_volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn dims(&self) -> FrameDims {
        self.0.dims
    }
}

impl TryFrom<Volume> for IntensityVolume {
    type Error = DsrError;

    fn try_from(vol: Volume) -> Result<Self> {
        if let Some(i) = vol.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DsrError::data(format!(
                "intensity must lie in [0,1], voxel {i} is {}",
                vol.data[i]
            )));
        }
        Ok(Self(vol))
    }
}

impl AsRef<Volume> for IntensityVolume {
    fn as_ref(&self) -> &Volume {
        &self.0
    }
}

impl AsRef<Volume> for Volume {
    fn as_ref(&self) -> &Volume {
        self
    }
}
