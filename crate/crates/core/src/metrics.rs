//! Regression metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Percent, over nonzero targets only. NaN when every target is zero.
    pub mape: f64,
    pub n: usize,
    /// Zero-target samples left out of MAPE.
    pub mape_excluded: usize,
}

pub fn compute_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::arg(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::arg("metrics need at least one sample"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::arg("metrics inputs must be finite"));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let mut ss_res = 0.0;
    let mut abs_sum = 0.0;
    let mut pct_sum = 0.0;
    let mut pct_n = 0usize;
    for (&y, &p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        ss_res += e * e;
        abs_sum += e.abs();
        if y != 0.0 {
            pct_sum += e.abs() / y.abs();
            pct_n += 1;
        }
    }
    let mse = ss_res / n;
    Ok(MetricsReport {
        r2: 1.0 - ss_res / ss_tot,
        mae: abs_sum / n,
        mse,
        rmse: mse.sqrt(),
        mape: if pct_n == 0 {
            f64::NAN
        } else {
            100.0 * pct_sum / pct_n as f64
        },
        n: y_true.len(),
        mape_excluded: y_true.len() - pct_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(m.r2, 0.5);
        assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - 0.577_350_269_189_625_7).abs() < 1e-15);
        assert!((m.mape - 100.0 / 9.0).abs() < 1e-12);
        assert_eq!(m.mape_excluded, 0);
    }

    #[test]
    fn perfect_and_mean_predictions() {
        let y = [0.5, 1.5, 4.0, -2.0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!(
            (m.r2, m.mae, m.mse, m.rmse, m.mape),
            (1.0, 0.0, 0.0, 0.0, 0.0)
        );
        let mean = y.iter().sum::<f64>() / 4.0;
        let m = compute_metrics(&y, &[mean; 4]).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn zero_targets_are_excluded_from_mape() {
        let m = compute_metrics(&[0.0, 2.0, 4.0], &[1.0, 1.0, 4.0]).unwrap();
        assert_eq!(m.mape_excluded, 1);
        assert!((m.mape - 25.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_metrics(&[3.0, 3.0], &[1.0, 2.0]),
            Err(Error::UndefinedR2)
        ));
        assert!(matches!(
            compute_metrics(&[1.0, 2.0], &[1.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0, f64::NAN], &[1.0, 1.0]).is_err());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn identities((y, p) in pair()) {
            let m = compute_metrics(&y, &p).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-15 * m.mse);
            prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
            prop_assert!(m.r2 <= 1.0);
        }

        #[test]
        fn affine_scale((y, p) in pair(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let m = compute_metrics(&y, &p).unwrap();
            let ya: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let pa: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            let s = compute_metrics(&ya, &pa).unwrap();
            prop_assert!((s.r2 - m.r2).abs() <= 1e-9 * m.r2.abs().max(1.0));
            prop_assert!((s.mae - a * m.mae).abs() <= 1e-9 * (a * m.mae).max(1.0));
            prop_assert!((s.mse - a * a * m.mse).abs() <= 1e-9 * (a * a * m.mse).max(1.0));
        }
    }
}
