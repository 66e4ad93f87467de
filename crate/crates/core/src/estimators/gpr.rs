//! Gaussian process regression with a zero prior mean.
//!
//! The posterior is computed from the Cholesky factor `L` of
//! `K + σ_n²I`. [`GprParams::posterior`] forms `v = L⁻¹k*` per query and
//! returns `mean = vᵀ(L⁻¹y)` and `var = k(q,q) − vᵀv`; [`GprParams::predict`]
//! uses the cached weights `(K + σ_n²I)⁻¹y` for the mean alone. The reported
//! variance is latent: observation noise is not added back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, dot, rbf_gram, solve_lower, solve_lower_transpose, DenseMatrix, RbfKernelParams,
    DEFAULT_JITTER,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GprStored", into = "GprStored")]
pub struct GprParams {
    pub kernel: RbfKernelParams,
    pub noise_variance: f64,
    pub x: DenseMatrix,
    /// `(K + σ_n²I)⁻¹y`
    pub weights: Vec<f64>,
    /// `L⁻¹y`
    whitened_targets: Vec<f64>,
    chol: DenseMatrix,
}

// The factor is rebuilt from the stored inputs on load; it is deterministic,
// so a reloaded model reproduces the original bit for bit.
#[derive(Serialize, Deserialize)]
struct GprStored {
    kernel: RbfKernelParams,
    noise_variance: f64,
    x: DenseMatrix,
    weights: Vec<f64>,
    whitened_targets: Vec<f64>,
}

impl From<GprParams> for GprStored {
    fn from(p: GprParams) -> Self {
        Self {
            kernel: p.kernel,
            noise_variance: p.noise_variance,
            x: p.x,
            weights: p.weights,
            whitened_targets: p.whitened_targets,
        }
    }
}

impl TryFrom<GprStored> for GprParams {
    type Error = Error;

    fn try_from(s: GprStored) -> Result<Self> {
        let chol = noisy_factor(&s.x, &s.kernel, s.noise_variance)?;
        if s.weights.len() != s.x.rows() || s.whitened_targets.len() != s.x.rows() {
            return Err(Error::dims(
                "stored GPR weights do not match the training inputs",
            ));
        }
        Ok(Self {
            kernel: s.kernel,
            noise_variance: s.noise_variance,
            x: s.x,
            weights: s.weights,
            whitened_targets: s.whitened_targets,
            chol,
        })
    }
}

impl PartialEq for GprParams {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.noise_variance == other.noise_variance
            && self.x == other.x
            && self.weights == other.weights
            && self.whitened_targets == other.whitened_targets
    }
}

fn noisy_factor(x: &DenseMatrix, kernel: &RbfKernelParams, noise: f64) -> Result<DenseMatrix> {
    let mut k = rbf_gram(x, kernel)?;
    for i in 0..k.rows() {
        k.set(i, i, k.get(i, i) + noise);
    }
    cholesky(&k, DEFAULT_JITTER)
}

pub fn fit_gpr(
    x: &DenseMatrix,
    y: &[f64],
    kernel: RbfKernelParams,
    noise_variance: f64,
) -> Result<GprParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::arg(format!(
            "noise variance must be >= 0, got {noise_variance}"
        )));
    }
    let chol = noisy_factor(x, &kernel, noise_variance)?;
    let whitened_targets = solve_lower(&chol, y)?;
    let weights = solve_lower_transpose(&chol, &whitened_targets)?;
    Ok(GprParams {
        kernel,
        noise_variance,
        x: x.clone(),
        weights,
        whitened_targets,
        chol,
    })
}

impl GprParams {
    pub fn cholesky_factor(&self) -> &DenseMatrix {
        &self.chol
    }

    fn cross_kernel(&self, q: &[f64]) -> Vec<f64> {
        self.x
            .row_iter()
            .map(|xi| self.kernel.eval(xi, q))
            .collect()
    }

    /// Posterior mean only, via the cached weights.
    pub fn predict(&self, queries: &DenseMatrix) -> Vec<f64> {
        queries
            .row_iter()
            .map(|q| dot(&self.cross_kernel(q), &self.weights))
            .collect()
    }

    /// Posterior mean and latent variance at each query row.
    pub fn posterior(&self, queries: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        if queries.cols() != self.x.cols() {
            return Err(Error::dims(format!(
                "queries have {} columns, model expects {}",
                queries.cols(),
                self.x.cols()
            )));
        }
        let mut mean = Vec::with_capacity(queries.rows());
        let mut var = Vec::with_capacity(queries.rows());
        for q in queries.row_iter() {
            let v = solve_lower(&self.chol, &self.cross_kernel(q))?;
            mean.push(dot(&v, &self.whitened_targets));
            let s = self.kernel.signal_variance - dot(&v, &v);
            var.push(s.max(0.0));
        }
        Ok((mean, var))
    }
}

/// Fits and evaluates the posterior in one call.
pub fn gpr_posterior(
    x: &DenseMatrix,
    y: &[f64],
    kernel: RbfKernelParams,
    noise_variance: f64,
    queries: &DenseMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    fit_gpr(x, y, kernel, noise_variance)?.posterior(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::krr::fit_krr;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (DenseMatrix::new(n, d, x).unwrap(), y)
    }

    #[test]
    fn noiseless_interpolation() {
        let (x, y) = random_problem(20, 3, 7);
        let (m, v) =
            gpr_posterior(&x, &y, RbfKernelParams::new(0.6, 1.3).unwrap(), 0.0, &x).unwrap();
        for i in 0..20 {
            assert!((m[i] - y[i]).abs() < 1e-8, "{} vs {}", m[i], y[i]);
            assert!(v[i].abs() < 1e-8);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let (x, y) = random_problem(20, 3, 8);
        let kp = RbfKernelParams::new(0.5, 1.7).unwrap();
        let far = DenseMatrix::new(1, 3, vec![100.0, -100.0, 50.0]).unwrap();
        let (m, v) = gpr_posterior(&x, &y, kp, 1e-2, &far).unwrap();
        assert!(m[0].abs() < 1e-9);
        assert!((v[0] - 1.7).abs() < 1e-9);
    }

    #[test]
    fn mean_routes_agree() {
        let (x, y) = random_problem(30, 4, 9);
        let p = fit_gpr(&x, &y, RbfKernelParams::new(1.1, 0.9).unwrap(), 0.05).unwrap();
        let (q, _) = random_problem(10, 4, 10);
        let (m, _) = p.posterior(&q).unwrap();
        for (a, b) in m.iter().zip(p.predict(&q)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn serde_round_trip_rebuilds_factor() {
        let (x, y) = random_problem(15, 2, 11);
        let p = fit_gpr(&x, &y, RbfKernelParams::new(0.9, 1.0).unwrap(), 1e-3).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: GprParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.cholesky_factor(), p.cholesky_factor());
        let (q, _) = random_problem(5, 2, 12);
        assert_eq!(back.posterior(&q).unwrap(), p.posterior(&q).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn variance_is_bounded(
            seed in any::<u64>(),
            n in 1usize..40,
            ell in 0.2f64..3.0,
            sf in 0.1f64..3.0,
            noise in 1e-6f64..1.0,
        ) {
            let (x, y) = random_problem(n, 3, seed);
            let (q, _) = random_problem(25, 3, seed.wrapping_add(1));
            let (_, v) = gpr_posterior(&x, &y, RbfKernelParams::new(ell, sf).unwrap(), noise, &q).unwrap();
            for vi in v {
                prop_assert!(vi >= 0.0 && vi <= sf + 1e-9);
            }
        }

        #[test]
        fn krr_matches_posterior_mean(
            seed in any::<u64>(),
            n in 1usize..60,
            ell in 0.3f64..3.0,
            alpha in 1e-4f64..1.0,
        ) {
            let (x, y) = random_problem(n, 5, seed);
            let (q, _) = random_problem(10, 5, seed ^ 0xdead);
            let kp = RbfKernelParams::new(ell, 1.0).unwrap();
            let krr = fit_krr(&x, &y, kp, alpha).unwrap().predict(&q);
            let (m, _) = gpr_posterior(&x, &y, kp, alpha, &q).unwrap();
            for (a, b) in krr.iter().zip(&m) {
                prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
            }
        }
    }
}
