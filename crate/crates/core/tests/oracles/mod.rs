//! Independent reference implementations for tests. Plain std, no crate code.
#![allow(dead_code, clippy::needless_range_loop)]

/// `σ_f² · exp(−‖a − b‖² / (2ℓ²))`
pub fn rbf(a: &[f64], b: &[f64], ell: f64, sf: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sf * (-d2 / (2.0 * ell * ell)).exp()
}

pub fn gram(x: &[Vec<f64>], ell: f64, sf: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| rbf(a, b, ell, sf)).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, p);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// `½θᵀKθ − yᵀθ + εΣ|θ|` written out directly.
pub fn svr_dual_objective(k: &[Vec<f64>], y: &[f64], theta: &[f64], eps: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += theta[i] * k[i][j] * theta[j];
        }
    }
    let lin: f64 = (0..n).map(|i| y[i] * theta[i]).sum();
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    0.5 * quad - lin + eps * l1
}

/// Euclidean projection of `v` onto `{z ∈ [0, c]^{2n} : Σ z[..n] = Σ z[n..]}`.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let n = v.len() / 2;
    let a = |i: usize| if i < n { 1.0 } else { -1.0 };
    let z = |lam: f64| -> Vec<f64> {
        (0..2 * n)
            .map(|i| (v[i] - lam * a(i)).clamp(0.0, c))
            .collect()
    };
    let g = |lam: f64| -> f64 { z(lam).iter().enumerate().map(|(i, zi)| a(i) * zi).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    z(0.5 * (lo + hi))
}

/// ε-SVR dual solved over `β = (α, α*)` by accelerated projected gradient.
/// Returns `θ = α − α*`.
pub fn svr_dual_projected_gradient(
    k: &[Vec<f64>],
    y: &[f64],
    c: f64,
    eps: f64,
    iters: usize,
) -> Vec<f64> {
    let n = y.len();
    let lip = 2.0
        * k.iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let step = 1.0 / lip;
    let grad = |b: &[f64]| -> Vec<f64> {
        let theta: Vec<f64> = (0..n).map(|i| b[i] - b[n + i]).collect();
        let kt: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * theta[j]).sum())
            .collect();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[i] = kt[i] + eps - y[i];
            g[n + i] = -kt[i] + eps + y[i];
        }
        g
    };
    let mut x = vec![0.0; 2 * n];
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&yk);
        let trial: Vec<f64> = yk.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let next = project(&trial, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
    }
    (0..n).map(|i| x[i] - x[n + i]).collect()
}

/// Central differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero components
/// from turning rounding noise into large relative errors.
pub fn gradient_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Textbook metrics: (r2, mae, mse).
pub fn metrics(y: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let mae = y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    (1.0 - ss_res / ss_tot, mae, ss_res / n)
}
