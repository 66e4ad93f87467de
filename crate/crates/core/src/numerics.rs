//! Dense linear algebra and special functions shared by the estimators.
//!
//! Everything here works on row-major `f64` storage. The matrices involved
//! are at most a few thousand rows, so plain unblocked kernels are enough.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter added to every kernel-matrix factorization.
pub const DEFAULT_JITTER: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dims(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Cholesky factor `L` of `a + jitter·I`, with `L·Lᵀ = a + jitter·I`.
pub fn cholesky(a: &DenseMatrix, jitter: f64) -> Result<DenseMatrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::dims(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::arg(format!(
            "jitter must be finite and >= 0, got {jitter}"
        )));
    }
    let sym_tol = SYMMETRY_TOL * a.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > sym_tol {
                return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = l.data.split_at_mut(i * n);
            let row_i = &tail[..n];
            let row_j = if j == i {
                row_i
            } else {
                &head[j * n..j * n + n]
            };
            let s = a.get(i, j) - dot(&row_i[..j], &row_j[..j]);
            if i == j {
                let pivot = s + jitter;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        pivot: i,
                        value: pivot,
                    });
                }
                tail[i] = pivot.sqrt();
            } else {
                let ljj = head[j * n + j];
                tail[j] = s / ljj;
            }
        }
    }
    Ok(l)
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_triangular_system(l, b)?;
    let n = l.rows;
    let mut x = b.to_vec();
    for i in 0..n {
        let row = l.row(i);
        let s = x[i] - dot(&row[..i], &x[..i]);
        x[i] = s / row[i];
    }
    Ok(x)
}

/// Solves `Lᵀ·x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_triangular_system(l, b)?;
    let n = l.rows;
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        x[i] /= l.get(i, i);
        let xi = x[i];
        // column i of Lᵀ above the diagonal is row i of L left of it
        for (xk, &lik) in x[..i].iter_mut().zip(&l.row(i)[..i]) {
            *xk -= lik * xi;
        }
    }
    Ok(x)
}

/// Solves `(L·Lᵀ)·x = b` given the Cholesky factor `L`.
pub fn solve_spd(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let y = solve_lower(l, b)?;
    solve_lower_transpose(l, &y)
}

fn check_triangular_system(l: &DenseMatrix, b: &[f64]) -> Result<()> {
    if l.rows != l.cols {
        return Err(Error::dims(format!(
            "triangular factor must be square, got {}x{}",
            l.rows, l.cols
        )));
    }
    if b.len() != l.rows {
        return Err(Error::dims(format!(
            "right-hand side has length {}, factor has order {}",
            b.len(),
            l.rows
        )));
    }
    Ok(())
}

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl RbfKernelParams {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        let p = Self {
            lengthscale,
            signal_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::arg(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::arg(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        Ok(())
    }

    /// `σ_f²·exp(−‖a−b‖²/(2ℓ²))`
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let inv = 0.5 / (self.lengthscale * self.lengthscale);
        self.signal_variance * (-squared_distance(a, b) * inv).exp()
    }
}

/// Kernel matrix `K[i][j] = k(xᵢ, zⱼ)`.
pub fn rbf_kernel(x: &DenseMatrix, z: &DenseMatrix, p: &RbfKernelParams) -> Result<DenseMatrix> {
    if x.cols != z.cols {
        return Err(Error::dims(format!(
            "kernel inputs have {} and {} columns",
            x.cols, z.cols
        )));
    }
    p.validate()?;
    let mut k = DenseMatrix::zeros(x.rows, z.rows);
    for (i, xi) in x.row_iter().enumerate() {
        for (j, zj) in z.row_iter().enumerate() {
            k.data[i * z.rows + j] = p.eval(xi, zj);
        }
    }
    Ok(k)
}

/// Symmetric kernel matrix of `x` with itself; evaluates each pair once.
pub fn rbf_gram(x: &DenseMatrix, p: &RbfKernelParams) -> Result<DenseMatrix> {
    p.validate()?;
    let n = x.rows;
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        k.data[i * n + i] = p.signal_variance;
        for j in 0..i {
            let v = p.eval(x.row(i), x.row(j));
            k.data[i * n + j] = v;
            k.data[j * n + i] = v;
        }
    }
    Ok(k)
}

/// Error function. Odd symmetry holds exactly.
pub fn erf(x: f64) -> f64 {
    let v = libm::erf(x.abs());
    if x.is_sign_negative() {
        -v
    } else {
        v
    }
}

/// Complementary error function `1 − erf(x)`, without cancellation for large `x`.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
