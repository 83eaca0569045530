//! Scalar and spectral shrinkage.
//!
//! The ν-shrinkage `T(x) = max(0, |x| - λ|x|^(ν-1)) sign(x)` interpolates
//! between soft thresholding (ν = 1) and a hard-threshold-like rule (ν → 0).
//! Its zero region is `|x| <= λ^(1/(2-ν))`, which is also the knee of the
//! ν-Huber envelope. Matrix versions apply the scalar map to singular values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::patch::Block;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkParams {
    pub lambda: f64,
    pub nu: f64,
}

impl ShrinkParams {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DsrError::arg(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(DsrError::arg(format!("nu must lie in [0, 1], got {nu}")));
        }
        Ok(Self { lambda, nu })
    }
}

/// `λ^(1/(2-ν))`, the largest magnitude mapped to zero.
#[inline]
pub fn shrink_threshold(lambda: f64, nu: f64) -> f64 {
    lambda.powf(1.0 / (2.0 - nu))
}

#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    let a = x.abs() - lambda;
    if a > 0.0 {
        a.copysign(x)
    } else {
        0.0
    }
}

/// ν-shrinkage. `nu = 0` is the `T(x) = x - λ/x` limit.
#[inline]
pub fn nu_shrink_scalar(x: f64, lambda: f64, nu: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 || a <= shrink_threshold(lambda, nu) {
        return 0.0;
    }
    let v = a - lambda * a.powf(nu - 1.0);
    if v > 0.0 {
        v.copysign(x)
    } else {
        0.0
    }
}

/// ν-Huber envelope: quadratic below the knee, `|x|^ν/ν - δ` above it.
pub fn nu_huber(x: f64, lambda: f64, nu: f64) -> f64 {
    let a = x.abs();
    if a < shrink_threshold(lambda, nu) {
        a * a / (2.0 * lambda)
    } else {
        let delta = (1.0 / nu - 0.5) * lambda.powf(nu / (2.0 - nu));
        a.powf(nu) / nu - delta
    }
}

/// Singular vectors of `m` on its shorter side, from the symmetric
/// eigendecomposition of the smaller Gram matrix. `sigma[i] = ‖m v_i‖`.
struct GramSvd {
    vectors: DMatrix<f64>,
    sigma: Vec<f64>,
    /// Vectors are left singular vectors (`m` is wide).
    left: bool,
}

fn gram_svd(m: &DMatrix<f64>) -> Result<GramSvd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DsrError::Numeric("non-finite block entry".into()));
    }
    let left = m.nrows() < m.ncols();
    let gram = if left {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let vectors = gram.symmetric_eigen().eigenvectors;
    let image = if left {
        m.transpose() * &vectors
    } else {
        m * &vectors
    };
    let sigma = image.column_iter().map(|c| c.norm()).collect();
    Ok(GramSvd {
        vectors,
        sigma,
        left,
    })
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut s = gram_svd(m)?.sigma;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Applies `f` (with `f(0) = 0`) to the singular values of `m` and
/// recomposes.
pub fn map_singular_values(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let GramSvd {
        vectors,
        sigma,
        left,
    } = gram_svd(m)?;
    let mut scaled = vectors.clone();
    for (j, &s) in sigma.iter().enumerate() {
        let c = if s > 0.0 { f(s) / s } else { 0.0 };
        scaled.column_mut(j).scale_mut(c);
    }
    let projector = scaled * vectors.transpose();
    Ok(if left { projector * m } else { m * projector })
}

/// Singular value soft thresholding, the prox of `λ‖·‖_*`.
pub fn prox_nuclear(m: &Block, lambda: f64) -> Result<Block> {
    map_singular_values(m.matrix(), |s| soft_threshold(s, lambda)).map(Block)
}

/// Low-rank prox: ν-shrinkage of the singular values.
pub fn prox_g(m: &Block, lambda: f64, nu: f64) -> Result<Block> {
    map_singular_values(m.matrix(), |s| nu_shrink_scalar(s, lambda, nu)).map(Block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn scalar_cases() {
        assert_eq!(nu_shrink_scalar(2.0, 1.0, 1.0), 1.0);
        assert_eq!(nu_shrink_scalar(0.5, 1.0, 1.0), 0.0);
        assert!((nu_shrink_scalar(3.0, 1.0, 0.0) - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(nu_shrink_scalar(0.9, 1.0, 0.0), 0.0);
        assert_eq!(nu_shrink_scalar(0.0, 1.0, 0.5), 0.0);
        assert_eq!(nu_shrink_scalar(-2.0, 1.0, 1.0), -1.0);
    }

    #[test]
    fn huber_cases() {
        assert!((nu_huber(0.5, 1.0, 1.0) - 0.125).abs() < 1e-15);
        assert!((nu_huber(2.0, 1.0, 1.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huber_knee_is_continuous() {
        for lambda in [1.0, 0.3] {
            for nu in [1.0, 0.5, 0.02] {
                let knee = shrink_threshold(lambda, nu);
                let quad = knee * knee / (2.0 * lambda);
                let delta = (1.0 / nu - 0.5) * lambda.powf(nu / (2.0 - nu));
                let power = knee.powf(nu) / nu - delta;
                assert!(
                    (quad - power).abs() < 1e-12,
                    "λ={lambda} ν={nu}: {quad} vs {power}"
                );
            }
        }
    }

    #[test]
    fn threshold_region_matches_knee() {
        for lambda in [0.1, 1.0, 4.0] {
            for nu in [0.0, 0.02, 0.5, 1.0] {
                let knee = shrink_threshold(lambda, nu);
                assert_eq!(nu_shrink_scalar(knee, lambda, nu), 0.0);
                assert_eq!(nu_shrink_scalar(knee * 0.999, lambda, nu), 0.0);
                assert!(nu_shrink_scalar(knee * 1.001, lambda, nu) > 0.0);
            }
        }
    }

    #[test]
    fn moreau_identity_soft() {
        // At ν = 1 the minimum of ½(x-y)² + λ|x| is λ·h(y); with λ = 1 it is h(y).
        for lambda in [1.0, 0.4, 2.5] {
            for i in 0..=1000 {
                let y = -5.0 + 0.01 * i as f64;
                let x = nu_shrink_scalar(y, lambda, 1.0);
                let env = 0.5 * (y - x) * (y - x) + lambda * x.abs();
                assert!((env - lambda * nu_huber(y, lambda, 1.0)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn shrinkage_is_odd_and_contractive(x in -50.0f64..50.0, lambda in 0.01f64..5.0, nu in 0.0f64..=1.0) {
            let t = nu_shrink_scalar(x, lambda, nu);
            prop_assert!(t.abs() <= x.abs());
            prop_assert_eq!(nu_shrink_scalar(-x, lambda, nu), -t);
            prop_assert!(t == 0.0 || t.signum() == x.signum());
        }

        #[test]
        fn shrinkage_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, lambda in 0.01f64..5.0, nu in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(nu_shrink_scalar(lo, lambda, nu) <= nu_shrink_scalar(hi, lambda, nu));
        }
    }

    #[test]
    fn diagonal_cases() {
        let m = Block(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        let soft = prox_nuclear(&m, 1.0).unwrap();
        assert!(
            max_abs_diff(
                soft.matrix(),
                &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
            ) < 1e-12
        );
        let g = prox_g(&m, 1.0, 0.0).unwrap();
        assert!(
            max_abs_diff(
                g.matrix(),
                &DMatrix::from_row_slice(2, 2, &[8.0 / 3.0, 0.0, 0.0, 0.0])
            ) < 1e-12
        );
    }

    #[test]
    fn zero_lambda_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Block(random_matrix(25, 10, &mut rng));
        assert!(max_abs_diff(prox_nuclear(&m, 0.0).unwrap().matrix(), m.matrix()) < 1e-12);
    }

    #[test]
    fn nu_one_matches_nuclear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = Block(random_matrix(25, 10, &mut rng));
            let lambda = rng.random_range(0.0..2.0);
            let a = prox_g(&m, lambda, 1.0).unwrap();
            let b = prox_nuclear(&m, lambda).unwrap();
            assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-12);
        }
    }

    #[test]
    fn degenerate_blocks_survive_a_vanishing_threshold() {
        let constant = DMatrix::from_element(25, 10, 2.5);
        let dup = DMatrix::from_fn(25, 10, |i, j| {
            if j % 3 == 0 {
                1.0
            } else {
                1.0 + 0.1 * i as f64
            }
        });
        let wide = dup.transpose();
        for m in [constant, dup, wide] {
            let out = prox_g(&Block(m.clone()), 1e-12, 0.02).unwrap();
            assert!((out.matrix() - &m).amax() < 1e-10);
        }
        let s = singular_values(&DMatrix::from_element(25, 10, 2.5)).unwrap();
        assert!((s[0] - 2.5 * 250f64.sqrt()).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn output_singular_values_are_shrunk_input_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(25, 10, &mut rng);
        let s_in = singular_values(&m).unwrap();
        let out = prox_g(&Block(m), 0.5, 0.3).unwrap();
        let s_out = singular_values(out.matrix()).unwrap();
        for (a, b) in s_in.iter().zip(&s_out) {
            assert!((nu_shrink_scalar(*a, 0.5, 0.3) - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_keeps_singular_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = nalgebra::DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let v = nalgebra::DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let sigma = 5.0;
        let m = &u * v.transpose() * sigma;
        let out = prox_g(&Block(m), 1.0, 0.02).unwrap();
        let expected = &u * v.transpose() * nu_shrink_scalar(sigma, 1.0, 0.02);
        assert!(max_abs_diff(out.matrix(), &expected) < 1e-12);
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        random_matrix(n, n, rng).qr().q()
    }

    #[test]
    fn prox_commutes_with_orthogonal_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for nu in [1.0, 0.5, 0.02] {
            let m = random_matrix(25, 10, &mut rng);
            let ql = random_orthogonal(25, &mut rng);
            let qr = random_orthogonal(10, &mut rng);
            let lhs = prox_g(&Block(&ql * &m * &qr), 0.3, nu).unwrap();
            let rhs = &ql * prox_g(&Block(m), 0.3, nu).unwrap().into_matrix() * &qr;
            assert!(max_abs_diff(lhs.matrix(), &rhs) < 1e-10);
        }
    }

    #[test]
    fn nuclear_prox_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let a = random_matrix(25, 10, &mut rng);
            let b = &a + random_matrix(25, 10, &mut rng) * rng.random_range(0.01..2.0);
            let pa = prox_nuclear(&Block(a.clone()), 0.7).unwrap();
            let pb = prox_nuclear(&Block(b.clone()), 0.7).unwrap();
            assert!((pa.matrix() - pb.matrix()).norm() <= (a - b).norm() + 1e-12);
        }
    }

    #[test]
    fn nuclear_prox_minimizes_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = random_matrix(25, 10, &mut rng);
        let lambda = 0.7;
        let nuclear = |b: &DMatrix<f64>| b.clone().svd(false, false).singular_values.sum();
        let objective = |b: &DMatrix<f64>| 0.5 * (&psi - b).norm_squared() + lambda * nuclear(b);
        let best = prox_nuclear(&Block(psi.clone()), lambda)
            .unwrap()
            .into_matrix();
        let f_best = objective(&best);
        for i in 0..2000 {
            let scale = [1e-1, 1e-2, 1e-3, 1e-4][i % 4];
            let trial = &best + random_matrix(25, 10, &mut rng) * scale;
            assert!(objective(&trial) >= f_best - 1e-12);
        }

        // long-run subgradient descent from psi with diminishing steps
        let mut b = psi.clone();
        let mut f_min = objective(&b);
        for k in 0..5000 {
            let svd = b.clone().svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            let grad = (&b - &psi) + (u * v_t) * lambda;
            b -= grad * (0.5 / (1.0 + k as f64).sqrt());
            f_min = f_min.min(objective(&b));
        }
        assert!(
            f_best <= f_min + 1e-9,
            "prox {f_best} vs subgradient {f_min}"
        );
    }

    #[test]
    fn hard_threshold_limit_away_from_knee() {
        // x - λ/x only matches hard thresholding once λ/x² is small.
        let lambda = 0.25f64;
        let knee = lambda.sqrt();
        for s in [0.1, 0.3, 0.49, 16.0, 20.0, 50.0] {
            let t = nu_shrink_scalar(s, lambda, 1e-6);
            let hard = if s > knee { s } else { 0.0 };
            if hard == 0.0 {
                assert_eq!(t, 0.0);
            } else {
                assert!((t - hard).abs() <= 1e-3 * hard, "σ={s}: {t} vs {hard}");
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(ShrinkParams::new(0.5, 0.02).is_ok());
        assert!(ShrinkParams::new(0.0, 0.02).is_err());
        assert!(ShrinkParams::new(1.0, 1.5).is_err());
    }

    #[test]
    fn nan_block_is_numeric_error() {
        let m = Block(DMatrix::from_element(3, 2, f64::NAN));
        assert!(matches!(prox_g(&m, 1.0, 1.0), Err(DsrError::Numeric(_))));
    }
}
