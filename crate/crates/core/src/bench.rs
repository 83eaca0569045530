//! Table-style experiment grid: every algorithm at every decimation factor,
//! with per-frame SNR curves and reconstructed volumes written to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::io::{read_volume, write_volume};
use crate::metrics::{add_noise, noise_sigma_for, per_frame_snr_db, snr_db};
use crate::sampling::{apply_sampling, Measurements, SamplingOperator};
use crate::scene::{synth_scene, SceneSpec};
use crate::solver::{default_lambda_grid, select_lambda, Algorithm, SolverConfig, StopReason};
use crate::volume::{IntensityVolume, Volume};

/// Input SNR assumed when sizing the default λ grid for noise-free runs;
/// interpolation error then plays the role of noise.
pub const NOISE_FREE_GRID_SNR_DB: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub factors: Vec<usize>,
    /// `null` runs noise-free.
    pub input_snr_db: Option<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Explicit λ candidates; the noise-scaled default grid otherwise.
    pub lambdas: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            factors: vec![2, 3, 4, 5],
            input_snr_db: Some(30.0),
            algorithms: Algorithm::ALL.to_vec(),
            lambdas: None,
            seeds: vec![0],
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() || self.algorithms.is_empty() || self.seeds.is_empty() {
            return Err(DsrError::arg(
                "factors, algorithms and seeds must be non-empty",
            ));
        }
        if self.factors.contains(&0) {
            return Err(DsrError::arg("decimation factors must be >= 1"));
        }
        if let Some(snr) = self.input_snr_db {
            if !snr.is_finite() {
                return Err(DsrError::arg("input_snr_db must be finite or null"));
            }
        }
        if let Some(l) = &self.lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(DsrError::arg(
                    "lambdas must be a non-empty list of non-negative values",
                ));
            }
        }
        Ok(())
    }
}

/// Bench input: a synthetic scene, or depth (and optional guide) DSRV files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scene: SceneSpec,
    pub depth: Option<PathBuf>,
    pub guide: Option<PathBuf>,
    pub grid: ExperimentGrid,
    /// Shared solver settings; `algo` and `lambda` are set per cell.
    pub solver: SolverConfig,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DsrError::arg(format!("bench config: {e}")))
    }

    /// Ground truth and guide, reading files relative to `base`.
    pub fn load_inputs(&self, base: &Path) -> Result<(Volume, Option<IntensityVolume>)> {
        match &self.depth {
            None => {
                let (guide, depth) = synth_scene(&self.scene)?;
                Ok((depth, Some(guide)))
            }
            Some(p) => {
                let depth = read_volume(base.join(p))?;
                let guide = match &self.guide {
                    Some(g) => Some(IntensityVolume::try_from(read_volume(base.join(g))?)?),
                    None => None,
                };
                Ok((depth, guide))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub algo: Algorithm,
    pub factor: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub snr_db: Option<f64>,
    pub iterations: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub final_rel_change: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: BenchConfig,
    pub runs: Vec<CellRun>,
}

impl BenchSummary {
    /// Mean SNR over seeds; NaN if any seed failed.
    pub fn cell(&self, algo: Algorithm, factor: usize) -> f64 {
        let runs: Vec<&CellRun> = self
            .runs
            .iter()
            .filter(|r| r.algo == algo && r.factor == factor)
            .collect();
        if runs.is_empty() {
            return f64::NAN;
        }
        let mut sum = 0.0;
        for r in &runs {
            match r.snr_db {
                Some(v) => sum += v,
                None => return f64::NAN,
            }
        }
        sum / runs.len() as f64
    }
}

/// Two-decimal table cell with `inf`/`-inf`/`nan` sentinels.
pub fn format_db(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.2}")
    }
}

fn format_frame_db(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        format_db(v)
    }
}

fn degrade(
    truth: &Volume,
    factor: usize,
    snr: Option<f64>,
    seed: u64,
) -> Result<(Measurements, f64)> {
    let op = SamplingOperator::decimation(truth.dims(), factor)?;
    let clean = apply_sampling(&op, truth)?;
    let sigma = noise_sigma_for(clean.values(), snr.unwrap_or(NOISE_FREE_GRID_SNR_DB));
    let psi = match snr {
        Some(s) => add_noise(&clean, s, seed)?,
        None => clean,
    };
    Ok((psi, sigma))
}

struct Outcome {
    lambda: Option<f64>,
    est: Volume,
    snr: f64,
    iterations: usize,
    stop_reason: StopReason,
    final_rel_change: Option<f64>,
}

fn run_cell(
    truth: &Volume,
    guide: Option<&IntensityVolume>,
    psi: &Measurements,
    sigma: f64,
    cfg: &BenchConfig,
    algo: Algorithm,
) -> Result<Outcome> {
    let solver = cfg.solver.with_algo(algo);
    let candidates = match (&cfg.grid.lambdas, algo.is_iterative()) {
        (_, false) => vec![solver.lambda],
        (Some(l), true) => l.clone(),
        (None, true) => default_lambda_grid(sigma, &solver.geometry, solver.nu),
    };
    let (lambda, est, report) = select_lambda(psi, guide, &solver, &candidates, truth)?;
    let snr = snr_db(truth.values(), est.values())?;
    if snr.is_nan() {
        return Err(DsrError::Numeric(format!(
            "{algo} produced a non-finite reconstruction"
        )));
    }
    Ok(Outcome {
        lambda: algo.is_iterative().then_some(lambda),
        est,
        snr,
        iterations: report.iterations,
        stop_reason: report.stop_reason,
        final_rel_change: report.final_rel_change(),
    })
}

/// Runs the grid on `truth` and writes `table.csv`, `frames_<algo>_<factor>.csv`,
/// `recon_<algo>_<factor>x_seed<seed>.dsrv` and `run.json` into `out`.
pub fn run_bench(
    cfg: &BenchConfig,
    truth: &Volume,
    guide: Option<&IntensityVolume>,
    out: &Path,
) -> Result<BenchSummary> {
    cfg.grid.validate()?;
    cfg.solver.validate()?;
    fs::create_dir_all(out)?;
    let grid = &cfg.grid;
    let frames = truth.dims().frames;
    let n_algo = grid.algorithms.len();

    let mut runs: Vec<Vec<CellRun>> = vec![Vec::new(); n_algo * grid.factors.len()];
    let mut curves: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); n_algo * grid.factors.len()];
    for (fi, &factor) in grid.factors.iter().enumerate() {
        for &seed in &grid.seeds {
            let degraded = degrade(truth, factor, grid.input_snr_db, seed);
            for (ai, &algo) in grid.algorithms.iter().enumerate() {
                let slot = ai * grid.factors.len() + fi;
                let result = degraded
                    .as_ref()
                    .map_err(|e| DsrError::Data(e.to_string()))
                    .and_then(|(psi, sigma)| run_cell(truth, guide, psi, *sigma, cfg, algo));
                let mut run = CellRun {
                    algo,
                    factor,
                    seed,
                    lambda: None,
                    snr_db: None,
                    iterations: None,
                    stop_reason: None,
                    final_rel_change: None,
                    error: None,
                };
                match result {
                    Ok(o) => {
                        write_volume(
                            &o.est,
                            out.join(format!("recon_{}_{factor}x_seed{seed}.dsrv", algo.name())),
                        )?;
                        curves[slot].push(Some(per_frame_snr_db(truth, &o.est)?));
                        run.lambda = o.lambda;
                        run.snr_db = Some(o.snr);
                        run.iterations = Some(o.iterations);
                        run.stop_reason = Some(o.stop_reason);
                        run.final_rel_change = o.final_rel_change;
                    }
                    Err(e) => {
                        curves[slot].push(None);
                        run.error = Some(e.to_string());
                    }
                }
                runs[slot].push(run);
            }
        }
    }

    let summary = BenchSummary {
        config: cfg.clone(),
        runs: runs.concat(),
    };

    let mut table = String::from("algo");
    for f in &grid.factors {
        write!(table, ",{f}x").unwrap();
    }
    table.push('\n');
    for &algo in &grid.algorithms {
        table.push_str(algo.name());
        for &f in &grid.factors {
            write!(table, ",{}", format_db(summary.cell(algo, f))).unwrap();
        }
        table.push('\n');
    }
    fs::write(out.join("table.csv"), table)?;

    for (ai, &algo) in grid.algorithms.iter().enumerate() {
        for (fi, &factor) in grid.factors.iter().enumerate() {
            let seeds = &curves[ai * grid.factors.len() + fi];
            let mut csv = String::from("frame,snr_db\n");
            for t in 0..frames {
                let mean = if seeds.iter().all(Option::is_some) {
                    seeds.iter().map(|c| c.as_ref().unwrap()[t]).sum::<f64>() / seeds.len() as f64
                } else {
                    f64::NAN
                };
                writeln!(csv, "{t},{}", format_frame_db(mean)).unwrap();
            }
            fs::write(
                out.join(format!("frames_{}_{factor}.csv", algo.name())),
                csv,
            )?;
        }
    }

    let json = serde_json::to_string_pretty(&summary).map_err(|e| DsrError::Data(e.to_string()))?;
    fs::write(out.join("run.json"), json + "\n")?;
    Ok(summary)
}
