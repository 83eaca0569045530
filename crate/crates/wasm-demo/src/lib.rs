//! Browser bindings for the interactive demo in `www/`.
//!
//! Three operations are exposed: the scalar shrinkage curve, a small
//! reconstruction comparing interpolation with the guided solvers, and the
//! patch group found by block matching around a clicked pixel.

use dsr_core::metrics::noise_sigma_for;
use dsr_core::scene::{synth_scene, SceneSpec};
use dsr_core::shrink;
use dsr_core::{
    add_noise, apply_sampling, build_groups, default_lambda_grid, linear_interpolate, run_pipeline,
    snr_db, Algorithm, DsrError, FrameDims, IntensityVolume, Measurements, PatchGroupTable,
    SamplingOperator, SolverConfig, Volume,
};
use wasm_bindgen::prelude::*;

fn js(e: DsrError) -> JsError {
    JsError::new(&e.to_string())
}

/// `T(x)` sampled at `samples` points on `[0, x_max]`.
#[wasm_bindgen]
pub fn shrink_curve(lambda: f64, nu: f64, x_max: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n)
        .map(|i| shrink::nu_shrink_scalar(x_max * i as f64 / (n - 1) as f64, lambda, nu))
        .collect()
}

#[wasm_bindgen]
pub fn shrink_threshold(lambda: f64, nu: f64) -> f64 {
    shrink::shrink_threshold(lambda, nu)
}

/// A small synthetic sequence, its decimated measurements and the latest
/// reconstruction.
#[wasm_bindgen]
pub struct Demo {
    truth: Volume,
    guide: IntensityVolume,
    psi: Measurements,
    sigma: f64,
    linear: Volume,
    recon: Option<Volume>,
    table: PatchGroupTable,
    config: SolverConfig,
}

impl Demo {
    pub fn build(factor: usize, snr_db: f64, seed: u64) -> dsr_core::Result<Demo> {
        let spec = SceneSpec {
            dims: FrameDims::new(48, 48, 6)?,
            seed,
            ..SceneSpec::default()
        };
        let (guide, truth) = synth_scene(&spec)?;
        let op = SamplingOperator::decimation(truth.dims(), factor)?;
        let clean = apply_sampling(&op, &truth)?;
        let psi = add_noise(&clean, snr_db, seed)?;
        let sigma = noise_sigma_for(
            clean.values(),
            if snr_db.is_finite() { snr_db } else { 30.0 },
        );
        let linear = linear_interpolate(&psi)?;
        let config = SolverConfig {
            max_iter: 30,
            ..SolverConfig::default()
        };
        let table = build_groups(guide.as_volume(), &config.effective_geometry())?;
        Ok(Demo {
            truth,
            guide,
            psi,
            sigma,
            linear,
            recon: None,
            table,
            config,
        })
    }

    /// Reconstructs with λ from the default grid position `scale` and
    /// returns the SNR in dB.
    pub fn solve(&mut self, algo: Algorithm, scale: f64, max_iter: usize) -> dsr_core::Result<f64> {
        let geometry = self.config.geometry;
        let edge = default_lambda_grid(self.sigma, &geometry, self.config.nu)[1];
        let cfg = SolverConfig {
            algo,
            lambda: scale.powf(2.0 - self.config.nu) * edge,
            max_iter,
            ..self.config.clone()
        };
        let (est, _) = run_pipeline(&self.psi, Some(&self.guide), &cfg)?;
        let snr = snr_db(self.truth.values(), est.values())?;
        self.recon = Some(est);
        Ok(snr)
    }

    /// Members `[x, y, t, ...]` of the group whose reference lies closest to
    /// `(x, y, t)`.
    pub fn group_near(&self, x: usize, y: usize, t: usize) -> Vec<u32> {
        let ps = self.table.geometry().patch_side as i64;
        let dist = |r: &dsr_core::PatchRef| {
            let dx = r.x as i64 + ps / 2 - x as i64;
            let dy = r.y as i64 + ps / 2 - y as i64;
            (r.t != t, dx * dx + dy * dy)
        };
        self.table
            .groups()
            .iter()
            .min_by_key(|g| dist(&g.reference))
            .map(|g| {
                g.members
                    .iter()
                    .flat_map(|m| [m.x as u32, m.y as u32, m.t as u32])
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(factor: usize, snr_db: f64, seed: u64) -> Result<Demo, JsError> {
        Demo::build(factor, snr_db, seed).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.truth.dims().width
    }

    pub fn height(&self) -> usize {
        self.truth.dims().height
    }

    pub fn frames(&self) -> usize {
        self.truth.dims().frames
    }

    /// One frame of `truth`, `guide`, `linear` or `recon`.
    pub fn frame(&self, which: &str, t: usize) -> Vec<f64> {
        let vol = match which {
            "truth" => &self.truth,
            "guide" => self.guide.as_volume(),
            "linear" => &self.linear,
            _ => self.recon.as_ref().unwrap_or(&self.linear),
        };
        vol.frame(t.min(self.frames() - 1)).to_vec()
    }

    /// Global `[min, max]` of the true depth, for a shared color scale.
    pub fn depth_range(&self) -> Vec<f64> {
        let (lo, hi) = self.truth.min_max();
        vec![lo, hi]
    }

    pub fn linear_snr(&self) -> f64 {
        snr_db(self.truth.values(), self.linear.values()).unwrap_or(f64::NAN)
    }

    pub fn reconstruct(&mut self, algo: &str, scale: f64, max_iter: usize) -> Result<f64, JsError> {
        let algo: Algorithm = algo.parse().map_err(js)?;
        self.solve(algo, scale, max_iter).map_err(js)
    }

    pub fn matches(&self, x: usize, y: usize, t: usize) -> Vec<u32> {
        self.group_near(x, y, t)
    }

    pub fn patch_side(&self) -> usize {
        self.table.geometry().patch_side
    }
}
