//! ε-insensitive support vector regression, solved in the dual by SMO.
//!
//! The dual is written over `2n` box-constrained multipliers
//! `β = (α, α*)` with signs `s = (+1, −1)`:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  sᵀβ = 0,  0 ≤ β ≤ C
//! Q_tu = s_t s_u K(x_t, x_u),   p = (ε − y, ε + y)
//! ```
//!
//! Each iteration picks the maximal violating pair, solves the two-variable
//! subproblem in closed form and updates the gradient. The fitted function is
//! `f(x) = Σ θᵢ K(xᵢ, x) + b` with `θ = α − α*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rbf_gram, DenseMatrix, RbfKernelParams};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoSettings {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    /// Iteration budget, in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SmoSettings {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_passes: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: RbfKernelParams,
    /// `θᵢ = αᵢ − αᵢ*` for the support vectors only.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub support: Vec<usize>,
    pub support_vectors: DenseMatrix,
    pub worst_kkt: f64,
    pub iterations: usize,
}

/// Full dual solution, before the support vectors are extracted.
#[derive(Debug, Clone)]
pub struct SvrSolution {
    pub theta: Vec<f64>,
    pub bias: f64,
    pub worst_kkt: f64,
    pub iterations: usize,
}

/// Worst KKT violation of `θ` with residuals `r = f(x) − y`.
pub fn kkt_residual(theta: &[f64], residuals: &[f64], c: f64, epsilon: f64) -> f64 {
    let bound = c * (1.0 - 1e-12);
    theta
        .iter()
        .zip(residuals)
        .map(|(&t, &r)| {
            if t == 0.0 {
                (r.abs() - epsilon).max(0.0)
            } else if t >= bound {
                (r + epsilon).max(0.0)
            } else if t <= -bound {
                (epsilon - r).max(0.0)
            } else if t > 0.0 {
                (r + epsilon).abs()
            } else {
                (r - epsilon).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `½θᵀKθ − yᵀθ + εΣ|θᵢ|`, the minimized dual objective.
pub fn dual_objective(k: &DenseMatrix, y: &[f64], theta: &[f64], epsilon: f64) -> f64 {
    let kt = k.matvec(theta).expect("square kernel");
    let quad: f64 = theta.iter().zip(&kt).map(|(a, b)| a * b).sum();
    let lin: f64 = theta.iter().zip(y).map(|(a, b)| a * b).sum();
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    0.5 * quad - lin + epsilon * l1
}

struct Smo<'a> {
    k: &'a DenseMatrix,
    n: usize,
    c: f64,
    beta: Vec<f64>,
    grad: Vec<f64>,
}

impl Smo<'_> {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn sample(&self, t: usize) -> usize {
        if t < self.n {
            t
        } else {
            t - self.n
        }
    }

    #[inline]
    fn q(&self, t: usize, u: usize) -> f64 {
        self.sign(t) * self.sign(u) * self.k.get(self.sample(t), self.sample(u))
    }

    fn in_up(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            self.beta[t] < self.c
        } else {
            self.beta[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            self.beta[t] > 0.0
        } else {
            self.beta[t] < self.c
        }
    }

    /// Maximal violating pair and its gap `m − M`.
    fn select(&self) -> Option<(usize, usize, f64)> {
        let mut i = None;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = None;
        let mut gmin = f64::INFINITY;
        for t in 0..2 * self.n {
            let v = -self.sign(t) * self.grad[t];
            if self.in_up(t) && v > gmax {
                gmax = v;
                i = Some(t);
            }
            if self.in_low(t) && v < gmin {
                gmin = v;
                j = Some(t);
            }
        }
        Some((i?, j?, gmax - gmin))
    }

    fn step(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.beta[i], self.beta[j]);
        let qd_i = self.q(i, i);
        let qd_j = self.q(j, j);
        let q_ij = self.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.sign(i) != self.sign(j) {
            let mut quad = qd_i + qd_j + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qd_i + qd_j - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.beta[i] = ai;
        self.beta[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        if di == 0.0 && dj == 0.0 {
            return;
        }
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Bias from the free multipliers, or the midpoint of the feasible
    /// interval when none are free.
    fn bias(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let at_upper = self.beta[t] >= self.c;
            let at_lower = self.beta[t] <= 0.0;
            if at_upper {
                if self.sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower {
                if self.sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            0.5 * (ub + lb)
        };
        -rho
    }

    fn theta(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.beta[i] - self.beta[i + self.n])
            .collect()
    }
}

/// Solves the dual for a precomputed kernel matrix.
pub fn solve_dual(k: &DenseMatrix, y: &[f64], s: &SmoSettings) -> Result<SvrSolution> {
    let n = y.len();
    if k.rows() != n || k.cols() != n {
        return Err(Error::dims(format!(
            "kernel is {}x{}, expected {n}x{n}",
            k.rows(),
            k.cols()
        )));
    }
    if !(s.c > 0.0 && s.c.is_finite()) {
        return Err(Error::arg(format!("C must be positive, got {}", s.c)));
    }
    if !(s.epsilon >= 0.0 && s.epsilon.is_finite()) {
        return Err(Error::arg(format!(
            "epsilon must be >= 0, got {}",
            s.epsilon
        )));
    }
    if !(s.tol > 0.0) {
        return Err(Error::arg(format!(
            "tolerance must be positive, got {}",
            s.tol
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut grad = Vec::with_capacity(2 * n);
    grad.extend(y.iter().map(|v| s.epsilon - v));
    grad.extend(y.iter().map(|v| s.epsilon + v));
    let mut smo = Smo {
        k,
        n,
        c: s.c,
        beta: vec![0.0; 2 * n],
        grad,
    };

    let budget = s.max_passes.saturating_mul(n.max(10));
    let mut gap_tol = s.tol;
    let mut iterations = 0;
    let worst = loop {
        while iterations < budget {
            match smo.select() {
                Some((i, j, gap)) if gap > gap_tol => {
                    smo.step(i, j);
                    iterations += 1;
                }
                _ => break,
            }
        }
        let theta = smo.theta();
        let bias = smo.bias();
        // residual from the gradient: r_i = (Kθ)_i + b − y_i
        let residuals: Vec<f64> = (0..n).map(|i| smo.grad[i] - s.epsilon + bias).collect();
        let worst = kkt_residual(&theta, &residuals, s.c, s.epsilon);
        if worst <= s.tol {
            return Ok(SvrSolution {
                theta,
                bias,
                worst_kkt: worst,
                iterations,
            });
        }
        if iterations >= budget || gap_tol < 1e-14 {
            break worst;
        }
        gap_tol *= 0.25;
    };
    Err(Error::Convergence {
        iterations,
        worst_kkt: worst,
    })
}

pub fn fit_svr(
    x: &DenseMatrix,
    y: &[f64],
    kernel: RbfKernelParams,
    settings: &SmoSettings,
) -> Result<SvrParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    let k = rbf_gram(x, &kernel)?;
    let sol = solve_dual(&k, y, settings)?;
    let support: Vec<usize> = sol
        .theta
        .iter()
        .enumerate()
        .filter(|(_, t)| **t != 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SvrParams {
        c: settings.c,
        epsilon: settings.epsilon,
        kernel,
        coef: support.iter().map(|&i| sol.theta[i]).collect(),
        bias: sol.bias,
        support_vectors: x.select_rows(&support),
        support,
        worst_kkt: sol.worst_kkt,
        iterations: sol.iterations,
    })
}

impl SvrParams {
    pub fn predict_row(&self, q: &[f64]) -> f64 {
        self.support_vectors
            .row_iter()
            .zip(&self.coef)
            .map(|(sv, t)| t * self.kernel.eval(sv, q))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        x.row_iter().map(|q| self.predict_row(q)).collect()
    }
}
