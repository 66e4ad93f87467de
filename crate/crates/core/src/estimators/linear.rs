//! Ordinary least squares with an intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, dot, solve_spd, DenseMatrix};

/// Ridge added to the normal equations so collinear columns stay solvable.
/// It applies to `AᵀA / n`, whose diagonal is O(1) for standardized
/// columns, so it dominates round-off at any row count.
pub const NORMAL_EQUATION_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearParams {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Solves `(AᵀA/n + jitter·I)θ = Aᵀy/n` with `A = [x | 1]`.
pub fn fit_linear(x: &DenseMatrix, y: &[f64]) -> Result<LinearParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = x.cols();
    let p = d + 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut aug = vec![1.0; p];
    for (row, &t) in x.row_iter().zip(y) {
        aug[..d].copy_from_slice(row);
        for i in 0..p {
            let ai = aug[i];
            rhs[i] += ai * t;
            for j in 0..=i {
                gram[i * p + j] += ai * aug[j];
            }
        }
    }
    let inv_n = 1.0 / x.rows() as f64;
    for i in 0..p {
        rhs[i] *= inv_n;
        for j in 0..=i {
            gram[i * p + j] *= inv_n;
            gram[j * p + i] = gram[i * p + j];
        }
    }
    let gram = DenseMatrix::new(p, p, gram)?;
    let l = cholesky(&gram, NORMAL_EQUATION_JITTER)?;
    let mut theta = solve_spd(&l, &rhs)?;
    let intercept = theta.pop().expect("intercept slot");
    Ok(LinearParams {
        weights: theta,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<[f64; 14]> = (0..30)
            .map(|i| {
                let mut r = [0.0; 14];
                r[0] = i as f64 * 0.3 - 4.0;
                r
            })
            .collect();
        let y: Vec<f64> = xs.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let p = fit_linear(&DenseMatrix::from_rows(&xs).unwrap(), &y).unwrap();
        assert!((p.weights[0] - 2.0).abs() < 1e-9);
        assert!((p.intercept - 1.0).abs() < 1e-9);
        assert!(p.weights[1..].iter().all(|w| w.abs() < 1e-9));
    }

    #[test]
    fn constant_target_gives_intercept_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..14).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = vec![3.25; 40];
        let p = fit_linear(&DenseMatrix::from_rows(&xs).unwrap(), &y).unwrap();
        assert!(p.weights.iter().all(|w| w.abs() < 1e-9), "{:?}", p.weights);
        assert!((p.intercept - 3.25).abs() < 1e-9);
    }

    #[test]
    fn residual_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..14).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = DenseMatrix::from_rows(&xs).unwrap();
        let p = fit_linear(&x, &y).unwrap();
        let resid: Vec<f64> = p.predict(&x).iter().zip(&y).map(|(f, t)| t - f).collect();
        for j in 0..14 {
            let s: f64 = (0..50).map(|i| x.get(i, j) * resid[i]).sum();
            assert!(s.abs() < 1e-6, "column {j}: {s}");
        }
        assert!(resid.iter().sum::<f64>().abs() < 1e-6);
    }

    #[test]
    fn collinear_columns_at_many_rows() {
        // columns 1 and 2 are exact combinations of column 0, and 10..14 repeat 3..7
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let mut r: Vec<f64> = (0..14).map(|_| rng.random_range(-2.0..2.0)).collect();
                r[1] = 0.3 * r[0];
                r[2] = r[0] - 1.0;
                for j in 10..14 {
                    r[j] = r[j - 7];
                }
                r
            })
            .collect();
        let y: Vec<f64> = xs.iter().map(|r| 1.5 * r[0] - r[4] + 0.5).collect();
        let x = DenseMatrix::from_rows(&xs).unwrap();
        let p = fit_linear(&x, &y).unwrap();
        for (f, t) in p.predict(&x).iter().zip(&y) {
            assert!((f - t).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(fit_linear(&DenseMatrix::zeros(3, 2), &[1.0]).is_err());
    }
}
