//! Kernel ridge regression with the squared-exponential kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, rbf_gram, solve_spd, DenseMatrix, RbfKernelParams, DEFAULT_JITTER,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrParams {
    pub alpha: f64,
    pub kernel: RbfKernelParams,
    /// Solution of `(K + αI)β = y`.
    pub dual: Vec<f64>,
    pub x: DenseMatrix,
}

pub fn fit_krr(
    x: &DenseMatrix,
    y: &[f64],
    kernel: RbfKernelParams,
    alpha: f64,
) -> Result<KrrParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::arg(format!(
            "ridge penalty must be >= 0, got {alpha}"
        )));
    }
    let mut k = rbf_gram(x, &kernel)?;
    for i in 0..k.rows() {
        k.set(i, i, k.get(i, i) + alpha);
    }
    let l = cholesky(&k, DEFAULT_JITTER)?;
    let dual = solve_spd(&l, y)?;
    Ok(KrrParams {
        alpha,
        kernel,
        dual,
        x: x.clone(),
    })
}

impl KrrParams {
    pub fn predict_row(&self, q: &[f64]) -> f64 {
        self.x
            .row_iter()
            .zip(&self.dual)
            .map(|(xi, b)| b * self.kernel.eval(xi, q))
            .sum()
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        x.row_iter().map(|q| self.predict_row(q)).collect()
    }
}
