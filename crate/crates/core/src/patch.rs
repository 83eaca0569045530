//! Space-time block matching and the patch extraction operators.
//!
//! A group `p` is a reference patch plus its `L - 1` nearest neighbours
//! (sum of squared differences on the guide) inside a space-time window.
//! `extract_block` is `B_p`, `adjoint_accumulate` is `B_p^T`, and the
//! per-voxel reference counts form the diagonal `R = sum_p B_p^T B_p`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::par;
use crate::volume::{FrameDims, Volume};

/// Search window size: pixels in x and y, frames in t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub wx: usize,
    pub wy: usize,
    pub wt: usize,
}

impl Default for SearchWindow {
    fn default() -> Self {
        Self {
            wx: 11,
            wy: 11,
            wt: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub patch_side: usize,
    pub stride: usize,
    pub window: SearchWindow,
    /// Patches per group (`L`).
    pub group_size: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        Self {
            patch_side: 5,
            stride: 3,
            window: SearchWindow::default(),
            group_size: 10,
        }
    }
}

impl PatchGeometry {
    /// Pixels per patch (`B`).
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn validate(&self, dims: FrameDims) -> Result<()> {
        let ps = self.patch_side;
        if ps == 0 {
            return Err(DsrError::arg("patch side must be positive"));
        }
        if self.stride == 0 || self.stride > ps {
            return Err(DsrError::arg(format!(
                "stride {} must lie in 1..={ps} for full coverage",
                self.stride
            )));
        }
        let w = self.window;
        if w.wx == 0 || w.wy == 0 || w.wt == 0 || w.wt.is_multiple_of(2) {
            return Err(DsrError::arg(format!(
                "window {}x{}x{} must be positive with an odd temporal extent",
                w.wx, w.wy, w.wt
            )));
        }
        if self.group_size == 0 {
            return Err(DsrError::arg("group size must be at least 1"));
        }
        if ps > dims.width.min(dims.height) {
            return Err(DsrError::arg(format!(
                "patch side {ps} exceeds frame {dims}"
            )));
        }
        Ok(())
    }

    /// Reference positions along one axis: the stride grid with the last
    /// position pinned to `n - patch_side`.
    pub fn reference_positions(&self, n: usize) -> Vec<usize> {
        let last = n - self.patch_side;
        let mut out: Vec<usize> = (0..=last).step_by(self.stride).collect();
        if *out.last().unwrap() != last {
            out.push(last);
        }
        out
    }
}

/// Top-left corner of a patch in frame `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchRef {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

impl PatchRef {
    pub fn new(x: usize, y: usize, t: usize) -> Self {
        Self { x, y, t }
    }

    fn lex_cmp(&self, other: &Self) -> Ordering {
        (self.t, self.y, self.x).cmp(&(other.t, other.y, other.x))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGroup {
    pub reference: PatchRef,
    /// `members[0]` is the reference.
    pub members: Vec<PatchRef>,
    /// Set when the window held fewer than `L` candidates and the group was
    /// padded by repeating the reference.
    pub padded: bool,
}

/// Per-voxel number of (group, member, in-patch offset) references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelCounts(pub Vec<u32>);

impl PixelCounts {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn min(&self) -> u32 {
        self.0.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct PatchGroupTable {
    geometry: PatchGeometry,
    dims: FrameDims,
    groups: Vec<PatchGroup>,
    counts: PixelCounts,
}

impl PatchGroupTable {
    /// Assembles a table from explicit groups. Members are bounds-checked.
    pub fn from_groups(
        dims: FrameDims,
        geometry: PatchGeometry,
        groups: Vec<PatchGroup>,
    ) -> Result<Self> {
        geometry.validate(dims)?;
        for (p, g) in groups.iter().enumerate() {
            if g.members.len() != geometry.group_size {
                return Err(DsrError::arg(format!(
                    "group {p} has {} members, expected {}",
                    g.members.len(),
                    geometry.group_size
                )));
            }
            for m in &g.members {
                check_in_bounds(m, dims, geometry.patch_side)?;
            }
        }
        let counts = count_references(dims, &geometry, &groups);
        Ok(Self {
            geometry,
            dims,
            groups,
            counts,
        })
    }

    pub fn geometry(&self) -> &PatchGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    pub fn groups(&self) -> &[PatchGroup] {
        &self.groups
    }

    /// Number of groups `P`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn counts(&self) -> &PixelCounts {
        &self.counts
    }

    pub fn padded_groups(&self) -> usize {
        self.groups.iter().filter(|g| g.padded).count()
    }

    /// Text dump, one line per group: `p,ref_x,ref_y,ref_t,x,y,t,x,y,t,...`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (p, g) in self.groups.iter().enumerate() {
            let r = g.reference;
            write!(s, "{p},{},{},{}", r.x, r.y, r.t).unwrap();
            for m in &g.members {
                write!(s, ",{},{},{}", m.x, m.y, m.t).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn check_in_bounds(m: &PatchRef, dims: FrameDims, ps: usize) -> Result<()> {
    if m.x + ps > dims.width || m.y + ps > dims.height || m.t >= dims.frames {
        return Err(DsrError::dims(format!(
            "patch at ({}, {}, {}) leaves volume {dims}",
            m.x, m.y, m.t
        )));
    }
    Ok(())
}

fn count_references(dims: FrameDims, geom: &PatchGeometry, groups: &[PatchGroup]) -> PixelCounts {
    let ps = geom.patch_side;
    let mut counts = vec![0u32; dims.len()];
    for g in groups {
        for m in &g.members {
            for dy in 0..ps {
                let row = dims.index(m.x, m.y + dy, m.t);
                for c in &mut counts[row..row + ps] {
                    *c += 1;
                }
            }
        }
    }
    PixelCounts(counts)
}

/// Inclusive window `[lo, hi]` on one axis, intersected with `[0, max]`.
fn window_range(center: usize, size: usize, max: usize) -> (usize, usize) {
    let below = (size - 1) / 2;
    let above = size / 2;
    (center.saturating_sub(below), (center + above).min(max))
}

fn patch_ssd(guide: &[f64], width: usize, ps: usize, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for dy in 0..ps {
        let ra = &guide[a + dy * width..a + dy * width + ps];
        let rb = &guide[b + dy * width..b + dy * width + ps];
        for (u, v) in ra.iter().zip(rb) {
            let d = u - v;
            acc += d * d;
        }
    }
    acc
}

fn match_reference(guide: &Volume, geom: &PatchGeometry, reference: PatchRef) -> PatchGroup {
    let dims = guide.dims();
    let ps = geom.patch_side;
    let w = geom.window;
    let g = guide.values();
    let ref_off = dims.index(reference.x, reference.y, reference.t);

    let (x0, x1) = window_range(reference.x, w.wx, dims.width - ps);
    let (y0, y1) = window_range(reference.y, w.wy, dims.height - ps);
    let (t0, t1) = window_range(reference.t, w.wt, dims.frames - 1);

    let mut candidates: Vec<(f64, PatchRef)> =
        Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1) * (t1 - t0 + 1));
    for t in t0..=t1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cand = PatchRef::new(x, y, t);
                if cand == reference {
                    continue;
                }
                let d = patch_ssd(g, dims.width, ps, ref_off, dims.index(x, y, t));
                candidates.push((d, cand));
            }
        }
    }

    let by_distance = |a: &(f64, PatchRef), b: &(f64, PatchRef)| {
        a.0.total_cmp(&b.0).then_with(|| a.1.lex_cmp(&b.1))
    };
    let wanted = geom.group_size - 1;
    if candidates.len() > wanted && wanted > 0 {
        candidates.select_nth_unstable_by(wanted - 1, by_distance);
        candidates.truncate(wanted);
    }
    candidates.sort_unstable_by(by_distance);
    candidates.truncate(wanted);

    let mut members = Vec::with_capacity(geom.group_size);
    members.push(reference);
    members.extend(candidates.iter().map(|c| c.1));
    let padded = members.len() < geom.group_size;
    members.resize(geom.group_size, reference);
    PatchGroup {
        reference,
        members,
        padded,
    }
}

/// Block matching over the whole volume using `guide` only. References are
/// enumerated frame by frame, then by row, then by column.
pub fn build_groups(guide: &Volume, geom: &PatchGeometry) -> Result<PatchGroupTable> {
    let dims = guide.dims();
    geom.validate(dims)?;
    let xs = geom.reference_positions(dims.width);
    let ys = geom.reference_positions(dims.height);
    let per_frame = xs.len() * ys.len();
    let mut refs = Vec::with_capacity(per_frame * dims.frames);
    for t in 0..dims.frames {
        for &y in &ys {
            refs.extend(xs.iter().map(|&x| PatchRef::new(x, y, t)));
        }
    }
    debug_assert_eq!(refs.len(), per_frame * dims.frames);

    let groups = par::map_indexed(refs.len(), |i| match_reference(guide, geom, refs[i]));
    let counts = count_references(dims, geom, &groups);
    Ok(PatchGroupTable {
        geometry: *geom,
        dims,
        groups,
        counts,
    })
}

/// `B x L` matrix of vectorized patches; column `l` is member `l` in
/// row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct Block(pub DMatrix<f64>);

impl Block {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

impl From<DMatrix<f64>> for Block {
    fn from(m: DMatrix<f64>) -> Self {
        Block(m)
    }
}

pub(crate) fn extract_unchecked(
    vol: &[f64],
    dims: FrameDims,
    group: &PatchGroup,
    ps: usize,
) -> Block {
    let mut data = Vec::with_capacity(ps * ps * group.members.len());
    for m in &group.members {
        for dy in 0..ps {
            let row = dims.index(m.x, m.y + dy, m.t);
            data.extend_from_slice(&vol[row..row + ps]);
        }
    }
    Block(DMatrix::from_vec(ps * ps, group.members.len(), data))
}

pub(crate) fn accumulate_unchecked(
    block: &Block,
    group: &PatchGroup,
    ps: usize,
    dims: FrameDims,
    acc: &mut [f64],
) {
    for (l, m) in group.members.iter().enumerate() {
        let col = block.0.column(l);
        for dy in 0..ps {
            let row = dims.index(m.x, m.y + dy, m.t);
            for (dx, a) in acc[row..row + ps].iter_mut().enumerate() {
                *a += col[dy * ps + dx];
            }
        }
    }
}

/// `B_p v`.
pub fn extract_block(vol: &Volume, group: &PatchGroup, geom: &PatchGeometry) -> Result<Block> {
    for m in &group.members {
        check_in_bounds(m, vol.dims(), geom.patch_side)?;
    }
    Ok(extract_unchecked(
        vol.values(),
        vol.dims(),
        group,
        geom.patch_side,
    ))
}

/// `acc += B_p^T block`.
pub fn adjoint_accumulate(
    block: &Block,
    group: &PatchGroup,
    geom: &PatchGeometry,
    acc: &mut Volume,
) -> Result<()> {
    let ps = geom.patch_side;
    if block.nrows() != ps * ps || block.ncols() != group.members.len() {
        return Err(DsrError::dims(format!(
            "block is {}x{}, group needs {}x{}",
            block.nrows(),
            block.ncols(),
            ps * ps,
            group.members.len()
        )));
    }
    let dims = acc.dims();
    for m in &group.members {
        check_in_bounds(m, dims, ps)?;
    }
    accumulate_unchecked(block, group, ps, dims, acc.values_mut());
    Ok(())
}

/// Recounts `R` from the group table.
pub fn compute_counts(table: &PatchGroupTable) -> PixelCounts {
    count_references(table.dims, &table.geometry, &table.groups)
}

/// `B v` for every group, in table order.
pub fn extract_all(vol: &Volume, table: &PatchGroupTable) -> Result<Vec<Block>> {
    vol.ensure_dims(table.dims, "extract_all")?;
    let ps = table.geometry.patch_side;
    Ok(par::map_indexed(table.len(), |p| {
        extract_unchecked(vol.values(), table.dims, &table.groups[p], ps)
    }))
}

/// Unnormalized `B^T beta`, accumulated in group order.
pub(crate) fn scatter_sum(table: &PatchGroupTable, blocks: &[Block]) -> Vec<f64> {
    let ps = table.geometry.patch_side;
    let mut acc = vec![0.0; table.dims.len()];
    for (g, b) in table.groups.iter().zip(blocks) {
        accumulate_unchecked(b, g, ps, table.dims, &mut acc);
    }
    acc
}

/// `R^{-1} B^T beta`: every voxel becomes the mean of all block entries that
/// reference it.
pub fn aggregate_average(table: &PatchGroupTable, blocks: &[Block]) -> Result<Volume> {
    if blocks.len() != table.len() {
        return Err(DsrError::dims(format!(
            "{} blocks for {} groups",
            blocks.len(),
            table.len()
        )));
    }
    let (b, l) = (table.geometry.patch_len(), table.geometry.group_size);
    if let Some(bad) = blocks
        .iter()
        .position(|blk| blk.nrows() != b || blk.ncols() != l)
    {
        return Err(DsrError::dims(format!("block {bad} is not {b}x{l}")));
    }
    let mut acc = scatter_sum(table, blocks);
    for (a, &c) in acc.iter_mut().zip(table.counts.as_slice()) {
        if c == 0 {
            return Err(DsrError::Numeric("voxel not covered by any patch".into()));
        }
        *a /= c as f64;
    }
    Ok(Volume::from_raw(table.dims, acc))
}
