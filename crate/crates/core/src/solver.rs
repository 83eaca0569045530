//! Reconstruction algorithms.
//!
//! Both iterative schemes minimize `½‖ψ - Hφ‖² + Σ_p R(B_p φ)` with the
//! low-rank penalty applied through [`prox_g`]:
//!
//! * ADMM keeps a split variable `β = Bφ` and a scaled dual `s`. Because
//!   `HᵀH` and `BᵀB = R` are diagonal, the φ-update is a per-voxel division.
//! * The simplified scheme drops the dual: it denoises every group, averages
//!   the groups back into a volume, then blends with the measurements.
//!
//! Group tables are built once before iterating and never re-matched.

use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::interp::{linear_interpolate, mask_fill};
use crate::metrics::snr_db;
use crate::par;
use crate::patch::{
    build_groups, extract_unchecked, scatter_sum, Block, PatchGeometry, PatchGroupTable,
};
use crate::sampling::{adjoint_sampling, apply_sampling, occupancy, Measurements, SamplingKind};
use crate::shrink::{prox_g, singular_values};
use crate::volume::{IntensityVolume, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Interpolation only (bilinear or nearest-sample fill).
    Linear,
    /// Simplified scheme, intensity-guided, frame-by-frame matching.
    Gds2d,
    /// Simplified scheme, matching on the interpolated depth.
    Ds3d,
    /// ADMM, intensity-guided, space-time matching.
    Admm3d,
    /// Simplified scheme, intensity-guided, space-time matching.
    Gds3d,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Linear,
        Algorithm::Gds2d,
        Algorithm::Ds3d,
        Algorithm::Admm3d,
        Algorithm::Gds3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Linear => "linear",
            Algorithm::Gds2d => "gds2d",
            Algorithm::Ds3d => "ds3d",
            Algorithm::Admm3d => "admm3d",
            Algorithm::Gds3d => "gds3d",
        }
    }

    pub fn is_iterative(self) -> bool {
        self != Algorithm::Linear
    }

    pub fn guide_mode(self) -> Option<GuideMode> {
        match self {
            Algorithm::Linear => None,
            Algorithm::Ds3d => Some(GuideMode::SelfDepth),
            _ => Some(GuideMode::Intensity),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = DsrError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| {
                a.name().eq_ignore_ascii_case(s)
                    || a.name().replace("3d", "-3d").eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| DsrError::arg(format!("unknown algorithm '{s}'")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuideMode {
    Intensity,
    SelfDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algo: Algorithm,
    pub lambda: f64,
    pub rho: f64,
    pub nu: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub geometry: PatchGeometry,
    /// Record `½‖ψ-Hφ‖² + λΣ‖B_pφ‖_*` per iteration. Costs one extra SVD per
    /// group per iteration.
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::Gds3d,
            lambda: 0.01,
            rho: 1.0,
            nu: 0.02,
            max_iter: 100,
            tol: 1e-4,
            geometry: PatchGeometry::default(),
            track_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn with_algo(&self, algo: Algorithm) -> Self {
        Self {
            algo,
            ..self.clone()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn guide_mode(&self) -> Option<GuideMode> {
        self.algo.guide_mode()
    }

    /// Temporal window actually used: frame-by-frame for GDS-2D.
    pub fn temporal_window(&self) -> usize {
        if self.algo == Algorithm::Gds2d {
            1
        } else {
            self.geometry.window.wt
        }
    }

    /// Geometry with the algorithm's temporal window applied.
    pub fn effective_geometry(&self) -> PatchGeometry {
        let mut g = self.geometry;
        g.window.wt = self.temporal_window();
        g
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DsrError::arg(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(DsrError::arg(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(DsrError::arg(format!(
                "nu must lie in [0, 1], got {}",
                self.nu
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(DsrError::arg(format!(
                "tolerance must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
    /// Non-iterative algorithm.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rel_change: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primal_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algo: Algorithm,
    pub lambda: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<TraceEntry>,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn final_rel_change(&self) -> Option<f64> {
        self.trace.last().map(|e| e.rel_change)
    }
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn relative_change(prev: &[f64], cur: &[f64]) -> f64 {
    let d = diff_norm(prev, cur);
    let n = norm(prev);
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

/// `‖cur - prev‖ / ‖prev‖ <= tol`.
pub fn stop_check(prev: &Volume, cur: &Volume, tol: f64) -> Result<bool> {
    cur.ensure_dims(prev.dims(), "stop_check")?;
    if norm(prev.values()) == 0.0 {
        return Err(DsrError::data("stop_check: previous iterate is zero"));
    }
    Ok(relative_change(prev.values(), cur.values()) <= tol)
}

/// `½‖ψ - Hφ‖² + λ Σ_p ‖B_p φ‖_*`.
pub fn objective_nuclear(
    phi: &Volume,
    psi: &Measurements,
    table: &PatchGroupTable,
    lambda: f64,
) -> Result<f64> {
    let h_phi = apply_sampling(psi.operator(), phi)?;
    phi.ensure_dims(table.dims(), "objective")?;
    let data: f64 = 0.5 * diff_norm(h_phi.values(), psi.values()).powi(2);
    let ps = table.geometry().patch_side;
    let nuclear: Vec<Result<f64>> = par::map_indexed(table.len(), |p| {
        let b = extract_unchecked(phi.values(), table.dims(), &table.groups()[p], ps);
        singular_values(b.matrix()).map(|s| s.iter().sum::<f64>())
    });
    let mut reg = 0.0;
    for n in nuclear {
        reg += n?;
    }
    Ok(data + lambda * reg)
}

/// Initial estimate: bilinear for decimation, nearest fill for masks.
pub fn initialize(psi: &Measurements) -> Result<Volume> {
    match psi.operator().kind() {
        SamplingKind::Decimation { .. } => linear_interpolate(psi),
        SamplingKind::Mask(_) => mask_fill(psi),
    }
}

struct Problem<'a> {
    psi: &'a Measurements,
    table: &'a PatchGroupTable,
    /// `Hᵀψ`.
    data: Vec<f64>,
    /// `diag(HᵀH)`.
    occ: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(psi: &'a Measurements, table: &'a PatchGroupTable) -> Result<Self> {
        let op = psi.operator();
        if op.dims() != table.dims() {
            return Err(DsrError::dims(format!(
                "measurements cover {}, group table {}",
                op.dims(),
                table.dims()
            )));
        }
        let data = adjoint_sampling(op, psi)?.into_values();
        let occ = occupancy(op).into_iter().map(f64::from).collect();
        Ok(Self {
            psi,
            table,
            data,
            occ,
        })
    }

    fn extract(&self, phi: &[f64]) -> Vec<Block> {
        let ps = self.table.geometry().patch_side;
        par::map_indexed(self.table.len(), |p| {
            extract_unchecked(phi, self.table.dims(), &self.table.groups()[p], ps)
        })
    }

    fn objective(&self, phi: &[f64], lambda: f64) -> Result<f64> {
        objective_nuclear(
            &Volume::from_raw(self.table.dims(), phi.to_vec()),
            self.psi,
            self.table,
            lambda,
        )
    }
}

fn shrink_all(inputs: &[Block], lambda: f64, nu: f64) -> Result<Vec<Block>> {
    par::map_indexed(inputs.len(), |p| prox_g(&inputs[p], lambda, nu))
        .into_iter()
        .collect()
}

/// ADMM φ-update: `(HᵀH + ρR)⁻¹ (Hᵀψ + ρBᵀz)` evaluated voxelwise.
pub fn admm_phi_update(
    data: &[f64],
    occ: &[f64],
    table: &PatchGroupTable,
    z: &[Block],
    rho: f64,
) -> Vec<f64> {
    let bt_z = scatter_sum(table, z);
    let counts = table.counts().as_slice();
    data.iter()
        .zip(occ)
        .zip(bt_z.iter().zip(counts))
        .map(|((&d, &h), (&bz, &r))| (d + rho * bz) / (h + rho * r as f64))
        .collect()
}

fn check_init(init: &Volume, table: &PatchGroupTable) -> Result<()> {
    init.ensure_dims(table.dims(), "initial estimate")
}

/// ADMM from an explicit starting point, `s⁰ = 0`.
pub fn solve_admm_from(
    psi: &Measurements,
    table: &PatchGroupTable,
    cfg: &SolverConfig,
    init: Volume,
) -> Result<(Volume, SolveReport)> {
    cfg.validate()?;
    check_init(&init, table)?;
    let clock = Stopwatch::start();
    let prob = Problem::new(psi, table)?;
    let rho = cfg.rho;
    let (b, l) = (table.geometry().patch_len(), table.geometry().group_size);

    // β⁰ = prox(Bφ⁰). Starting from β⁰ = Bφ⁰ would make the first φ-step
    // return φ⁰ whenever φ⁰ already agrees with the samples.
    let mut phi = init.into_values();
    let mut beta = shrink_all(&prob.extract(&phi), cfg.lambda / rho, cfg.nu)?;
    let mut dual: Vec<Block> = (0..table.len())
        .map(|_| Block(nalgebra::DMatrix::zeros(b, l)))
        .collect();
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for _ in 0..cfg.max_iter {
        let z: Vec<Block> = beta
            .iter()
            .zip(&dual)
            .map(|(bb, s)| Block(&bb.0 + &s.0 / rho))
            .collect();
        let next = admm_phi_update(&prob.data, &prob.occ, table, &z, rho);

        let b_phi = prob.extract(&next);
        let y: Vec<Block> = b_phi
            .iter()
            .zip(&dual)
            .map(|(bp, s)| Block(&bp.0 - &s.0 / rho))
            .collect();
        beta = shrink_all(&y, cfg.lambda / rho, cfg.nu)?;

        let mut res_sq = 0.0;
        let mut bphi_sq = 0.0;
        for ((s, bb), bp) in dual.iter_mut().zip(&beta).zip(&b_phi) {
            let r = &bb.0 - &bp.0;
            res_sq += r.norm_squared();
            bphi_sq += bp.0.norm_squared();
            s.0 += r * rho;
        }
        let primal = if bphi_sq > 0.0 {
            (res_sq / bphi_sq).sqrt()
        } else {
            res_sq.sqrt()
        };

        let rel = relative_change(&phi, &next);
        phi = next;
        let objective = if cfg.track_objective {
            Some(prob.objective(&phi, cfg.lambda)?)
        } else {
            None
        };
        trace.push(TraceEntry {
            rel_change: rel,
            primal_residual: Some(primal),
            objective,
        });
        if !rel.is_finite() {
            return Err(DsrError::Numeric("ADMM iterate diverged".into()));
        }
        if rel <= cfg.tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let report = SolveReport {
        algo: cfg.algo,
        lambda: cfg.lambda,
        iterations: trace.len(),
        stop_reason,
        trace,
        wall_time: clock.seconds(),
    };
    Ok((Volume::from_raw(table.dims(), phi), report))
}

pub fn solve_admm(
    psi: &Measurements,
    table: &PatchGroupTable,
    cfg: &SolverConfig,
) -> Result<(Volume, SolveReport)> {
    solve_admm_from(psi, table, cfg, initialize(psi)?)
}

/// Simplified scheme from an explicit starting point.
pub fn solve_simplified_from(
    psi: &Measurements,
    table: &PatchGroupTable,
    cfg: &SolverConfig,
    init: Volume,
) -> Result<(Volume, SolveReport)> {
    cfg.validate()?;
    check_init(&init, table)?;
    let clock = Stopwatch::start();
    let prob = Problem::new(psi, table)?;
    let rho = cfg.rho;
    let counts = table.counts().as_slice();

    let mut phi = init.into_values();
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for _ in 0..cfg.max_iter {
        let beta = shrink_all(&prob.extract(&phi), cfg.lambda, cfg.nu)?;
        let sum = scatter_sum(table, &beta);
        let next: Vec<f64> = sum
            .iter()
            .zip(counts)
            .zip(prob.data.iter().zip(&prob.occ))
            .map(|((&s, &r), (&d, &h))| {
                let averaged = s / r as f64;
                (d + rho * averaged) / (h + rho)
            })
            .collect();

        let rel = relative_change(&phi, &next);
        phi = next;
        let objective = if cfg.track_objective {
            Some(prob.objective(&phi, cfg.lambda)?)
        } else {
            None
        };
        trace.push(TraceEntry {
            rel_change: rel,
            primal_residual: None,
            objective,
        });
        if !rel.is_finite() {
            return Err(DsrError::Numeric("iterate diverged".into()));
        }
        if rel <= cfg.tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let report = SolveReport {
        algo: cfg.algo,
        lambda: cfg.lambda,
        iterations: trace.len(),
        stop_reason,
        trace,
        wall_time: clock.seconds(),
    };
    Ok((Volume::from_raw(table.dims(), phi), report))
}

pub fn solve_simplified(
    psi: &Measurements,
    table: &PatchGroupTable,
    cfg: &SolverConfig,
) -> Result<(Volume, SolveReport)> {
    solve_simplified_from(psi, table, cfg, initialize(psi)?)
}

/// Initialization and group table for one algorithm; independent of λ.
pub struct Prepared {
    pub init: Volume,
    pub table: Option<PatchGroupTable>,
}

pub fn prepare(
    psi: &Measurements,
    guide: Option<&IntensityVolume>,
    cfg: &SolverConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    let init = initialize(psi)?;
    let table = match cfg.guide_mode() {
        None => None,
        Some(GuideMode::SelfDepth) => Some(build_groups(&init, &cfg.effective_geometry())?),
        Some(GuideMode::Intensity) => {
            let guide = guide
                .ok_or_else(|| DsrError::arg(format!("{} needs an intensity guide", cfg.algo)))?;
            guide
                .as_volume()
                .ensure_dims(psi.operator().dims(), "guide")?;
            Some(build_groups(guide.as_volume(), &cfg.effective_geometry())?)
        }
    };
    Ok(Prepared { init, table })
}

/// Solves with a prepared initialization and table.
pub fn solve_prepared(
    psi: &Measurements,
    prepared: &Prepared,
    cfg: &SolverConfig,
) -> Result<(Volume, SolveReport)> {
    let table = match (&prepared.table, cfg.algo) {
        (_, Algorithm::Linear) | (None, _) => {
            let report = SolveReport {
                algo: cfg.algo,
                lambda: cfg.lambda,
                iterations: 0,
                stop_reason: StopReason::Direct,
                trace: Vec::new(),
                wall_time: 0.0,
            };
            return Ok((prepared.init.clone(), report));
        }
        (Some(t), _) => t,
    };
    match cfg.algo {
        Algorithm::Admm3d => solve_admm_from(psi, table, cfg, prepared.init.clone()),
        _ => solve_simplified_from(psi, table, cfg, prepared.init.clone()),
    }
}

/// Full reconstruction: initialization, block matching on the guide (or on
/// the initialization for DS-3D), then the selected solver.
pub fn run_pipeline(
    psi: &Measurements,
    guide: Option<&IntensityVolume>,
    cfg: &SolverConfig,
) -> Result<(Volume, SolveReport)> {
    let prepared = prepare(psi, guide, cfg)?;
    solve_prepared(psi, &prepared, cfg)
}

/// Threshold multiples used by [`default_lambda_grid`].
pub const LAMBDA_GRID_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Candidate λ values whose shrinkage thresholds sit at multiples of the
/// largest singular value expected from a pure-noise block,
/// `σ(√(patch_len) + √L)`.
pub fn default_lambda_grid(sigma: f64, geometry: &PatchGeometry, nu: f64) -> Vec<f64> {
    let edge = sigma * ((geometry.patch_len() as f64).sqrt() + (geometry.group_size as f64).sqrt());
    LAMBDA_GRID_SCALES
        .iter()
        .map(|c| (c * edge).powf(2.0 - nu))
        .collect()
}

/// Runs each λ and keeps the reconstruction scoring highest; ties go to the
/// smaller λ, then to the earlier candidate.
pub fn select_lambda_by(
    psi: &Measurements,
    guide: Option<&IntensityVolume>,
    cfg: &SolverConfig,
    candidates: &[f64],
    score: impl Fn(&Volume) -> Result<f64>,
) -> Result<(f64, Volume, SolveReport)> {
    if candidates.is_empty() {
        return Err(DsrError::arg("empty lambda candidate list"));
    }
    let prepared = prepare(psi, guide, cfg)?;
    let mut best: Option<(f64, f64, Volume, SolveReport)> = None;
    for &lambda in candidates {
        let (vol, report) = solve_prepared(psi, &prepared, &cfg.with_lambda(lambda))?;
        let s = score(&vol)?;
        let better = match &best {
            None => true,
            Some((bl, bs, _, _)) => s > *bs || (s == *bs && lambda < *bl),
        };
        if better {
            best = Some((lambda, s, vol, report));
        }
    }
    let (lambda, _, vol, report) = best.expect("at least one candidate");
    Ok((lambda, vol, report))
}

/// Oracle λ selection against a known reference volume.
pub fn select_lambda(
    psi: &Measurements,
    guide: Option<&IntensityVolume>,
    cfg: &SolverConfig,
    candidates: &[f64],
    reference: &Volume,
) -> Result<(f64, Volume, SolveReport)> {
    select_lambda_by(psi, guide, cfg, candidates, |v| {
        snr_db(reference.values(), v.values())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::SearchWindow;
    use crate::sampling::SamplingOperator;
    use crate::volume::FrameDims;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stop_check_cases() {
        let d = FrameDims::new(3, 3, 1).unwrap();
        let a = Volume::from_fn(d, |x, y, _| 1.0 + x as f64 + y as f64);
        assert!(stop_check(&a, &a, 1e-12).unwrap());
        let scaled = |s: f64| Volume::from_fn(d, |x, y, _| s * (1.0 + x as f64 + y as f64));
        assert!(!stop_check(&a, &scaled(1.001), 1e-4).unwrap());
        assert!(stop_check(&a, &scaled(1.0 + 5e-5), 1e-4).unwrap());
        assert!(stop_check(&Volume::zeros(d), &a, 1e-4).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("GDS-3D".parse::<Algorithm>().unwrap(), Algorithm::Gds3d);
        assert!("tv2d".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_modes() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.with_algo(Algorithm::Gds2d).temporal_window(), 1);
        assert_eq!(cfg.with_algo(Algorithm::Gds3d).temporal_window(), 3);
        assert_eq!(
            cfg.with_algo(Algorithm::Ds3d).guide_mode(),
            Some(GuideMode::SelfDepth)
        );
        assert_eq!(
            cfg.with_algo(Algorithm::Admm3d).guide_mode(),
            Some(GuideMode::Intensity)
        );
        assert_eq!(cfg.with_algo(Algorithm::Linear).guide_mode(), None);
        assert!(SolverConfig {
            rho: 0.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(SolverConfig { nu: 2.0, ..cfg }.validate().is_err());
    }

    /// Dense oracle: assemble H and every B_p explicitly and solve the normal
    /// equations of ½‖ψ - Hφ‖² + ρ/2 ‖Bφ - z‖² with LU.
    #[test]
    fn admm_phi_step_matches_dense_least_squares() {
        let d = FrameDims::new(6, 5, 2).unwrap();
        let n = d.len();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let geom = PatchGeometry {
            patch_side: 2,
            stride: 2,
            window: SearchWindow {
                wx: 3,
                wy: 3,
                wt: 3,
            },
            group_size: 3,
        };
        let guide = Volume::from_fn(d, |_, _, _| rng.random_range(0.0..1.0));
        let table = build_groups(&guide, &geom).unwrap();
        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let op = SamplingOperator::mask(d, mask).unwrap();
        let psi = Measurements::new(
            op.clone(),
            (0..op.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let z: Vec<Block> = (0..table.len())
            .map(|_| Block(DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0))))
            .collect();
        let rho = 0.7;

        let prob = Problem::new(&psi, &table).unwrap();
        let fast = admm_phi_update(&prob.data, &prob.occ, &table, &z, rho);

        let mut h = DMatrix::<f64>::zeros(op.len(), n);
        for (m, &i) in op.indices().iter().enumerate() {
            h[(m, i)] = 1.0;
        }
        let rows = table.len() * 12;
        let mut bmat = DMatrix::<f64>::zeros(rows, n);
        let mut zvec = DVector::<f64>::zeros(rows);
        let mut r = 0;
        for (g, blk) in table.groups().iter().zip(&z) {
            for (l, m) in g.members.iter().enumerate() {
                for k in 0..4 {
                    let voxel = d.index(m.x + k % 2, m.y + k / 2, m.t);
                    bmat[(r, voxel)] = 1.0;
                    zvec[r] = blk.matrix()[(k, l)];
                    r += 1;
                }
            }
        }
        let psi_v = DVector::from_column_slice(psi.values());
        let lhs = h.transpose() * &h + bmat.transpose() * &bmat * rho;
        let rhs = h.transpose() * psi_v + bmat.transpose() * zvec * rho;
        let dense = lhs.lu().solve(&rhs).unwrap();
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_of_constant_blocks() {
        let d = FrameDims::new(8, 8, 2).unwrap();
        let c = 1.7;
        let phi = Volume::filled(d, c);
        let op = SamplingOperator::full(d);
        let psi = apply_sampling(&op, &phi).unwrap();
        let geom = PatchGeometry {
            patch_side: 2,
            stride: 2,
            window: SearchWindow {
                wx: 3,
                wy: 3,
                wt: 3,
            },
            group_size: 3,
        };
        let table = build_groups(&phi, &geom).unwrap();
        assert_eq!(objective_nuclear(&phi, &psi, &table, 0.0).unwrap(), 0.0);
        let expected = table.len() as f64 * c * (4.0f64 * 3.0).sqrt();
        let got = objective_nuclear(&phi, &psi, &table, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn objective_matches_naive_recomputation() {
        let d = FrameDims::new(7, 6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let phi = Volume::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0));
        let geom = PatchGeometry {
            patch_side: 3,
            stride: 2,
            window: SearchWindow {
                wx: 5,
                wy: 5,
                wt: 3,
            },
            group_size: 4,
        };
        let table = build_groups(&phi, &geom).unwrap();
        let op = SamplingOperator::decimation(d, 2).unwrap();
        let psi = Measurements::new(
            op.clone(),
            (0..op.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let lambda = 0.3;

        let mut data = 0.0;
        for (m, &i) in op.indices().iter().enumerate() {
            data += 0.5 * (psi.values()[m] - phi.values()[i]).powi(2);
        }
        let mut reg = 0.0;
        for g in table.groups() {
            let mut blk = DMatrix::<f64>::zeros(9, 4);
            for (l, m) in g.members.iter().enumerate() {
                for k in 0..9 {
                    blk[(k, l)] = phi.get(m.x + k % 3, m.y + k / 3, m.t);
                }
            }
            // singular values from the eigenvalues of the Gram matrix
            let gram = blk.transpose() * &blk;
            reg += gram
                .symmetric_eigenvalues()
                .iter()
                .map(|e| e.max(0.0).sqrt())
                .sum::<f64>();
        }
        let expected = data + lambda * reg;
        let got = objective_nuclear(&phi, &psi, &table, lambda).unwrap();
        assert!((got - expected).abs() < 1e-8 * expected.abs().max(1.0));
    }

    fn tiny_problem(full: bool) -> (Volume, Measurements, IntensityVolume) {
        let d = FrameDims::new(12, 12, 3).unwrap();
        let truth = Volume::from_fn(d, |x, y, t| {
            let inside = (3 + t..8 + t).contains(&x) && (4..9).contains(&y);
            if inside {
                1.0
            } else {
                2.0 + 0.05 * x as f64 + 0.02 * y as f64
            }
        });
        let guide = Volume::from_fn(d, |x, y, t| {
            if (3 + t..8 + t).contains(&x) && (4..9).contains(&y) {
                0.8
            } else {
                0.2
            }
        });
        let op = if full {
            SamplingOperator::full(d)
        } else {
            SamplingOperator::decimation(d, 2).unwrap()
        };
        let psi = apply_sampling(&op, &truth).unwrap();
        (truth, psi, IntensityVolume::try_from(guide).unwrap())
    }

    fn small_cfg(algo: Algorithm) -> SolverConfig {
        SolverConfig {
            algo,
            lambda: 1e-12,
            max_iter: 200,
            tol: 1e-12,
            geometry: PatchGeometry {
                patch_side: 3,
                stride: 2,
                window: SearchWindow {
                    wx: 5,
                    wy: 5,
                    wt: 3,
                },
                group_size: 4,
            },
            ..SolverConfig::default()
        }
    }

    #[test]
    fn vanishing_lambda_with_full_sampling_returns_measurements() {
        let (truth, psi, guide) = tiny_problem(true);
        for algo in [
            Algorithm::Admm3d,
            Algorithm::Gds3d,
            Algorithm::Gds2d,
            Algorithm::Ds3d,
        ] {
            let (est, _) = run_pipeline(&psi, Some(&guide), &small_cfg(algo)).unwrap();
            for (a, b) in est.values().iter().zip(truth.values()) {
                assert!((a - b).abs() < 1e-8, "{algo}");
            }
        }
    }

    #[test]
    fn linear_mode_is_the_initializer() {
        let (_, psi, guide) = tiny_problem(false);
        let (est, report) =
            run_pipeline(&psi, Some(&guide), &small_cfg(Algorithm::Linear)).unwrap();
        assert_eq!(est, linear_interpolate(&psi).unwrap());
        assert_eq!(report.iterations, 0);
        assert_eq!(report.stop_reason, StopReason::Direct);
    }

    #[test]
    fn guided_modes_require_guide() {
        let (_, psi, _) = tiny_problem(false);
        assert!(run_pipeline(&psi, None, &small_cfg(Algorithm::Gds3d)).is_err());
        assert!(run_pipeline(&psi, None, &small_cfg(Algorithm::Ds3d)).is_ok());
    }

    #[test]
    fn trace_length_matches_iterations() {
        let (_, psi, guide) = tiny_problem(false);
        let cfg = SolverConfig {
            lambda: 0.05,
            max_iter: 7,
            tol: 0.0,
            ..small_cfg(Algorithm::Admm3d)
        };
        let (_, report) = run_pipeline(&psi, Some(&guide), &cfg).unwrap();
        assert_eq!(report.iterations, 7);
        assert_eq!(report.trace.len(), 7);
        assert_eq!(report.stop_reason, StopReason::MaxIter);
        assert!(report.trace.iter().all(|e| e.primal_residual.is_some()));
    }

    #[test]
    fn select_lambda_contract() {
        let (truth, psi, guide) = tiny_problem(false);
        let cfg = SolverConfig {
            max_iter: 20,
            tol: 1e-4,
            ..small_cfg(Algorithm::Gds3d)
        };
        let (l, _, _) = select_lambda(&psi, Some(&guide), &cfg, &[0.1], &truth).unwrap();
        assert_eq!(l, 0.1);
        assert!(select_lambda(&psi, Some(&guide), &cfg, &[], &truth).is_err());

        let cands = [1e-6, 0.02, 50.0];
        let (best, vol, _) = select_lambda(&psi, Some(&guide), &cfg, &cands, &truth).unwrap();
        let best_snr = snr_db(truth.values(), vol.values()).unwrap();
        for &c in &cands {
            let (v, _) = run_pipeline(&psi, Some(&guide), &cfg.with_lambda(c)).unwrap();
            assert!(snr_db(truth.values(), v.values()).unwrap() <= best_snr);
        }
        assert!(cands.contains(&best));

        // equal scores: first wins
        let (l, _, _) =
            select_lambda_by(&psi, Some(&guide), &cfg, &[0.3, 0.3, 0.3], |_| Ok(1.0)).unwrap();
        assert_eq!(l, 0.3);
        // tie on score picks the smaller λ
        let (l, _, _) =
            select_lambda_by(&psi, Some(&guide), &cfg, &[0.5, 0.2, 0.4], |_| Ok(1.0)).unwrap();
        assert_eq!(l, 0.2);
    }
}
