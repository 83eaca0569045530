//! Selection-type measurement operators and the forward model `psi = H phi`.
//!
//! Every measurement reads exactly one distinct voxel, so `H H^T = I` on the
//! measurement space and `H^T H` is a 0/1 diagonal.

use crate::error::{DsrError, Result};
use crate::volume::{FrameDims, Volume};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SamplingKind {
    /// Regular grid `{(x, y, t) : x mod f = 0, y mod f = 0}`, phase (0,0).
    Decimation { factor: usize },
    /// Arbitrary voxel subset, one flag per voxel.
    Mask(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingOperator {
    kind: SamplingKind,
    dims: FrameDims,
    /// Selected voxel indices in ascending (scan) order.
    indices: Vec<usize>,
}

impl SamplingOperator {
    pub fn decimation(dims: FrameDims, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(DsrError::arg("decimation factor must be >= 1"));
        }
        let mut indices = Vec::new();
        for t in 0..dims.frames {
            for y in (0..dims.height).step_by(factor) {
                for x in (0..dims.width).step_by(factor) {
                    indices.push(dims.index(x, y, t));
                }
            }
        }
        Ok(Self {
            kind: SamplingKind::Decimation { factor },
            dims,
            indices,
        })
    }

    pub fn mask(dims: FrameDims, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != dims.len() {
            return Err(DsrError::dims(format!(
                "mask for {dims} needs {} entries, got {}",
                dims.len(),
                mask.len()
            )));
        }
        let indices = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Ok(Self {
            kind: SamplingKind::Mask(mask),
            dims,
            indices,
        })
    }

    pub fn full(dims: FrameDims) -> Self {
        Self::mask(dims, vec![true; dims.len()]).expect("mask length matches dims")
    }

    pub fn kind(&self) -> &SamplingKind {
        &self.kind
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    /// Measurement count `M`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn decimation_factor(&self) -> Option<usize> {
        match self.kind {
            SamplingKind::Decimation { factor } => Some(factor),
            SamplingKind::Mask(_) => None,
        }
    }

    /// Low-resolution grid size `(ceil(W/f), ceil(H/f))` for decimation.
    pub fn low_res_size(&self) -> Option<(usize, usize)> {
        self.decimation_factor()
            .map(|f| (self.dims.width.div_ceil(f), self.dims.height.div_ceil(f)))
    }

    /// Per-voxel 0/1 flags.
    pub fn selected(&self) -> Vec<bool> {
        match &self.kind {
            SamplingKind::Mask(m) => m.clone(),
            SamplingKind::Decimation { .. } => {
                let mut out = vec![false; self.dims.len()];
                for &i in &self.indices {
                    out[i] = true;
                }
                out
            }
        }
    }
}

/// Measurement vector `psi` bound to the operator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    operator: SamplingOperator,
    values: Vec<f64>,
}

impl Measurements {
    pub fn new(operator: SamplingOperator, values: Vec<f64>) -> Result<Self> {
        if values.len() != operator.len() {
            return Err(DsrError::dims(format!(
                "operator takes {} measurements, got {}",
                operator.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DsrError::data("non-finite measurement"));
        }
        Ok(Self { operator, values })
    }

    pub fn operator(&self) -> &SamplingOperator {
        &self.operator
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            operator: self.operator.clone(),
            values,
        }
    }
}

pub fn apply_sampling(op: &SamplingOperator, vol: &Volume) -> Result<Measurements> {
    vol.ensure_dims(op.dims, "apply_sampling")?;
    let v = vol.values();
    let values = op.indices.iter().map(|&i| v[i]).collect();
    Ok(Measurements {
        operator: op.clone(),
        values,
    })
}

/// `H^T m`: measured voxels receive their values, the rest are zero.
pub fn adjoint_sampling(op: &SamplingOperator, m: &Measurements) -> Result<Volume> {
    if m.operator != *op {
        return Err(DsrError::dims(
            "measurements were taken with a different operator",
        ));
    }
    let mut out = vec![0.0; op.dims.len()];
    for (&i, &v) in op.indices.iter().zip(&m.values) {
        out[i] = v;
    }
    Ok(Volume::from_raw(op.dims, out))
}

/// Diagonal of `H^T H`.
pub fn occupancy(op: &SamplingOperator) -> Vec<u32> {
    let mut out = vec![0u32; op.dims.len()];
    for &i in &op.indices {
        out[i] = 1;
    }
    out
}
