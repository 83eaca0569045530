//! Guided depth superresolution for RGB-D video.
//!
//! High-resolution depth is recovered from decimated or sparsely sampled
//! noisy depth plus a co-registered intensity video. Similar patches are
//! grouped across a space-time window using the intensity guide, and each
//! group is regularized towards low rank with a nonconvex shrinkage of its
//! singular values. Two solvers are provided: an exact ADMM and a simplified
//! scheme that alternates low-rank denoising with data consistency.

pub mod bench;
pub mod error;
pub mod interp;
pub mod io;
pub mod metrics;
mod par;
pub mod patch;
pub mod sampling;
pub mod scene;
pub mod shrink;
pub mod solver;
pub mod sparse;
pub mod volume;

pub use error::{DsrError, Result};
pub use interp::{linear_interpolate, luma, mask_fill};
pub use metrics::{add_noise, per_frame_snr_db, snr_db};
pub use patch::{
    adjoint_accumulate, aggregate_average, build_groups, compute_counts, extract_all,
    extract_block, Block, PatchGeometry, PatchGroup, PatchGroupTable, PatchRef, PixelCounts,
    SearchWindow,
};
pub use sampling::{
    adjoint_sampling, apply_sampling, occupancy, Measurements, SamplingKind, SamplingOperator,
};
pub use solver::{
    default_lambda_grid, objective_nuclear, run_pipeline, select_lambda, solve_admm,
    solve_simplified, stop_check, Algorithm, GuideMode, SolveReport, SolverConfig, StopReason,
    TraceEntry,
};
pub use volume::{DepthVolume, FrameDims, IntensityVolume, Volume};
