//! Inverse-distance weighted k-nearest-neighbour regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

pub fn fit_knn(x: &DenseMatrix, y: &[f64], k: usize) -> Result<KnnParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if k == 0 || k > x.rows() {
        return Err(Error::arg(format!(
            "k must lie in 1..={} for this training set, got {k}",
            x.rows()
        )));
    }
    Ok(KnnParams {
        k,
        x: x.clone(),
        y: y.to_vec(),
    })
}

/// The `k` nearest training rows as `(distance, row)`, ties to the lower row.
pub fn nearest(p: &KnnParams, q: &[f64]) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> =
        p.x.row_iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, q), i))
            .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if p.k < d.len() {
        d.select_nth_unstable_by(p.k - 1, by_dist);
        d.truncate(p.k);
    }
    d.sort_by(by_dist);
    d.into_iter().map(|(s, i)| (s.sqrt(), i)).collect()
}

/// `Σ wᵢyᵢ / Σ wᵢ` with `wᵢ = 1/dᵢ`; exact matches short-circuit to their target.
pub fn knn_predict(p: &KnnParams, q: &[f64]) -> f64 {
    let nn = nearest(p, q);
    let exact: Vec<f64> = nn
        .iter()
        .filter(|(d, _)| *d == 0.0)
        .map(|&(_, i)| p.y[i])
        .collect();
    if !exact.is_empty() {
        return exact.iter().sum::<f64>() / exact.len() as f64;
    }
    let (num, den) = nn.iter().fold((0.0, 0.0), |(n, s), &(d, i)| {
        let w = 1.0 / d;
        (n + w * p.y[i], s + w)
    });
    num / den
}

impl KnnParams {
    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        x.row_iter().map(|q| knn_predict(self, q)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(points: &[f64]) -> DenseMatrix {
        DenseMatrix::new(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn exact_match_returns_target() {
        let p = fit_knn(&line(&[0.0, 1.0, 2.0]), &[5.0, 6.0, 7.0], 3).unwrap();
        assert_eq!(knn_predict(&p, &[1.0]), 6.0);
    }

    #[test]
    fn inverse_distance_example() {
        // neighbours at distance 1 (target 0) and 3 (target 4)
        let p = fit_knn(&line(&[1.0, 3.0, 10.0]), &[0.0, 4.0, 100.0], 2).unwrap();
        assert!((knn_predict(&p, &[0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_distances_give_mean() {
        let x =
            DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let p = fit_knn(&x, &[1.0, 2.0, 3.0, 6.0], 4).unwrap();
        assert!((knn_predict(&p, &[0.0, 0.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_prefer_lower_rows() {
        let p = fit_knn(&line(&[-1.0, 1.0, 1.0]), &[0.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(nearest(&p, &[0.0]), vec![(1.0, 0)]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(fit_knn(&line(&[0.0, 1.0]), &[0.0, 1.0], 3).is_err());
        assert!(fit_knn(&line(&[0.0, 1.0]), &[0.0, 1.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn prediction_within_neighbour_range(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), 1..40),
            k in 1usize..10,
            q in (-6.0f64..6.0, -6.0f64..6.0),
        ) {
            let k = k.min(pts.len());
            let x = DenseMatrix::from_rows(&pts.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>()).unwrap();
            let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let p = fit_knn(&x, &y, k).unwrap();
            let nn = nearest(&p, &[q.0, q.1]);
            let lo = nn.iter().map(|&(_, i)| y[i]).fold(f64::INFINITY, f64::min);
            let hi = nn.iter().map(|&(_, i)| y[i]).fold(f64::NEG_INFINITY, f64::max);
            let v = knn_predict(&p, &[q.0, q.1]);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
