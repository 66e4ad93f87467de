//! Cross-validated grid search and the end-to-end train/test experiment.
//!
//! A grid maps hyperparameter names to candidate values. Points are
//! enumerated in odometer order over the names sorted alphabetically, with
//! the last name changing fastest; ties in mean validation R² go to the
//! earliest point. Each fold refits its own [`Standardizer`](crate::data::Standardizer)
//! on the training folds only, which [`Model::fit`] does by construction.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::{kfold, split_indices, Dataset, FoldPlan, DEFAULT_SEED, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::estimators::{Family, Hyperparameters, Model, Predictor};
use crate::metrics::{compute_metrics, MetricsReport};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

/// Hyperparameter name → candidate values. An empty grid is a single point
/// at the family defaults.
pub type Grid = BTreeMap<String, Vec<Value>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub family: Family,
    pub grid: Grid,
    pub k: usize,
    pub seed: u64,
}

impl SearchSpec {
    pub fn new(family: Family, grid: Grid) -> Self {
        Self {
            family,
            grid,
            k: DEFAULT_FOLDS,
            seed: DEFAULT_SEED,
        }
    }

    /// Every grid point in enumeration order, validated against the family.
    pub fn points(&self) -> Result<Vec<(Value, Hyperparameters)>> {
        enumerate_grid(self.family, &self.grid)
    }
}

pub fn enumerate_grid(family: Family, grid: &Grid) -> Result<Vec<(Value, Hyperparameters)>> {
    for (name, values) in grid {
        if values.is_empty() {
            return Err(Error::arg(format!(
                "{family} grid entry `{name}` has no values"
            )));
        }
    }
    let names: Vec<&String> = grid.keys().collect();
    let sizes: Vec<usize> = grid.values().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; names.len()];
    for _ in 0..total {
        let mut point = Map::new();
        for (j, name) in names.iter().enumerate() {
            point.insert((*name).clone(), grid[*name][digits[j]].clone());
        }
        let point = Value::Object(point);
        let hp = Hyperparameters::from_json(family, &point)?;
        out.push((point, hp));
        for j in (0..digits.len()).rev() {
            digits[j] += 1;
            if digits[j] < sizes[j] {
                break;
            }
            digits[j] = 0;
        }
    }
    Ok(out)
}

fn values(v: &[f64]) -> Vec<Value> {
    v.iter().map(|&x| json!(x)).collect()
}

/// Grids used when a configuration does not supply one.
pub fn default_grid(family: Family) -> Grid {
    let ell = values(&[0.5, 1.0, 2.0, 4.0]);
    let mut g = Grid::new();
    match family {
        Family::Lr => {}
        Family::Knn => {
            g.insert("k".into(), (1..=15).map(|k| json!(k)).collect());
        }
        Family::Krr => {
            g.insert("alpha".into(), values(&[1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1]));
            g.insert("lengthscale".into(), ell);
        }
        Family::Svr => {
            g.insert("c".into(), values(&[0.1, 1.0, 10.0, 100.0]));
            g.insert("epsilon".into(), values(&[0.01, 0.05, 0.1]));
            g.insert("lengthscale".into(), ell);
        }
        Family::Gpr => {
            g.insert("lengthscale".into(), ell);
            g.insert("signal_variance".into(), values(&[0.5, 1.0, 2.0]));
            g.insert("noise_variance".into(), values(&[1e-4, 1e-2, 1e-1]));
        }
        Family::Mlp => {
            g.insert("hidden_layers".into(), vec![json!([64, 64]), json!([128])]);
            g.insert("learning_rate".into(), values(&[1e-3, 1e-2]));
        }
        Family::Gru => {
            g.insert("hidden_size".into(), vec![json!(16), json!(32), json!(64)]);
            g.insert("learning_rate".into(), values(&[1e-3, 1e-2]));
        }
    }
    g
}

/// One (grid point, fold) cell of a search. `r2` is `-inf` for a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRecord {
    pub family: Family,
    pub point: usize,
    pub params: Value,
    pub fold: usize,
    pub r2: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointScore {
    pub params: Value,
    /// Mean validation R², `-inf` if any fold failed.
    pub mean_r2: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Hyperparameters,
    pub best_point: usize,
    pub points: Vec<PointScore>,
    pub table: Vec<CvRecord>,
}

impl SearchResult {
    pub fn best_score(&self) -> f64 {
        self.points[self.best_point].mean_r2
    }
}

/// Fits `hp` on the training folds of `fold`; the validation rows are never
/// touched.
pub fn fit_fold(
    hp: &Hyperparameters,
    d: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    seed: u64,
) -> Result<Model> {
    let (train, _) = plan.split(fold);
    let sub = d
        .subset(&train)
        .ok_or_else(|| Error::arg("fold has no training rows"))?;
    Model::fit(hp, &sub, seed)
}

fn score_fold(
    hp: &Hyperparameters,
    d: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    seed: u64,
) -> Result<f64> {
    let model = fit_fold(hp, d, plan, fold, seed)?;
    let (_, valid) = plan.split(fold);
    let v = d
        .subset(&valid)
        .ok_or_else(|| Error::arg("fold has no validation rows"))?;
    let pred = model.predict(v.features())?;
    Ok(compute_metrics(v.targets(), &pred)?.r2)
}

/// k-fold search over `spec.grid`, scoring by mean validation R².
///
/// A failed fit scores its point `-inf` and the search moves on. If every
/// point fails, the first error is returned.
pub fn grid_search_cv(spec: &SearchSpec, train: &Dataset) -> Result<SearchResult> {
    let points = spec.points()?;
    if train.len() < spec.k {
        return Err(Error::arg(format!(
            "{} training rows cannot fill {} folds",
            train.len(),
            spec.k
        )));
    }
    let plan = kfold(train.len(), spec.k, spec.seed)?;
    let mut table = Vec::new();
    let mut scores = Vec::with_capacity(points.len());
    let mut first_error = None;
    for (pi, (params, hp)) in points.iter().enumerate() {
        let mut sum = 0.0;
        let mut failed = false;
        for fold in 0..spec.k {
            let (r2, error) = match score_fold(hp, train, &plan, fold, spec.seed) {
                Ok(r2) => (r2, None),
                Err(e) => {
                    let msg = e.to_string();
                    first_error.get_or_insert(e);
                    (f64::NEG_INFINITY, Some(msg))
                }
            };
            table.push(CvRecord {
                family: spec.family,
                point: pi,
                params: params.clone(),
                fold,
                r2,
                error: error.clone(),
            });
            if error.is_some() {
                failed = true;
                break;
            }
            sum += r2;
        }
        scores.push(PointScore {
            params: params.clone(),
            mean_r2: if failed {
                f64::NEG_INFINITY
            } else {
                sum / spec.k as f64
            },
            failed,
        });
    }
    if scores.iter().all(|s| s.failed) {
        return Err(first_error.expect("a failed point records its error"));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_r2 > scores[best].mean_r2 {
            best = i;
        }
    }
    Ok(SearchResult {
        best: points[best].1.clone(),
        best_point: best,
        points: scores,
        table,
    })
}

/// Writes `family,point,params,fold,r2,error` rows.
pub fn write_cv_table<W: Write>(rows: &[CvRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["family", "point", "params", "fold", "r2", "error"])?;
    for r in rows {
        out.write_record([
            r.family.to_string(),
            r.point.to_string(),
            r.params.to_string(),
            r.fold.to_string(),
            r.r2.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("cv table", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    pub families: Vec<Family>,
    /// Per-family grids; families left out use [`default_grid`].
    #[serde(default)]
    pub grids: BTreeMap<Family, Grid>,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    /// Optional column-mapping file for external datasets.
    #[serde(default)]
    pub column_map: Option<PathBuf>,
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl ExperimentConfig {
    pub fn new(families: Vec<Family>) -> Self {
        Self {
            seed: None,
            test_fraction: DEFAULT_TEST_FRACTION,
            k_folds: DEFAULT_FOLDS,
            families,
            grids: BTreeMap::new(),
            dataset_path: None,
            column_map: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::arg(format!("{}: {e}", path.display())))
    }

    pub fn grid_for(&self, family: Family) -> Grid {
        self.grids
            .get(&family)
            .cloned()
            .unwrap_or_else(|| default_grid(family))
    }

    fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::arg("experiment names no model family"));
        }
        for f in &self.families {
            enumerate_grid(*f, &self.grid_for(*f))?;
        }
        for f in self.grids.keys() {
            if !self.families.contains(f) {
                return Err(Error::arg(format!("grid given for unlisted family {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub column_means: BTreeMap<String, f64>,
}

impl DatasetFingerprint {
    pub fn of(d: &Dataset) -> Self {
        let means = d.column_means();
        let names = d.feature_names();
        Self {
            rows: d.len(),
            column_means: (0..FEATURE_COUNT)
                .map(|i| (names[i].to_string(), means[i]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyOutcome {
    pub family: Family,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub hyperparameters: Option<Value>,
    pub cv_mean_r2: Option<f64>,
    pub train: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
}

impl FamilyOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub test_fraction: f64,
    pub k_folds: usize,
    pub dataset: DatasetFingerprint,
    pub train_rows: usize,
    pub test_rows: usize,
    pub families: Vec<FamilyOutcome>,
}

/// Per-row predictions of every family, in original row order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub is_test: Vec<bool>,
    pub y_true: Vec<f64>,
    /// `None` for a family that failed.
    pub columns: Vec<(Family, Option<Vec<f64>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub cv_table: Vec<CvRecord>,
    pub predictions: PredictionTable,
}

struct FamilyFit {
    outcome: FamilyOutcome,
    predictions: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_family(
    family: Family,
    grid: Grid,
    k: usize,
    seed: u64,
    d: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    cv_table: &mut Vec<CvRecord>,
) -> Result<FamilyFit> {
    let train = d.subset(train_idx).ok_or(Error::EmptyDataset)?;
    let test = d.subset(test_idx).ok_or(Error::EmptyDataset)?;
    let spec = SearchSpec {
        family,
        grid,
        k,
        seed,
    };
    let search = grid_search_cv(&spec, &train)?;
    cv_table.extend(search.table.iter().cloned());
    let model = Model::fit(&search.best, &train, seed)?;
    let train_pred = model.predict(train.features())?;
    let test_pred = model.predict(test.features())?;
    let mut predictions = vec![0.0; d.len()];
    for (&i, &p) in train_idx.iter().zip(&train_pred) {
        predictions[i] = p;
    }
    for (&i, &p) in test_idx.iter().zip(&test_pred) {
        predictions[i] = p;
    }
    Ok(FamilyFit {
        outcome: FamilyOutcome {
            family,
            status: "ok",
            error: None,
            hyperparameters: Some(search.best.to_json()),
            cv_mean_r2: Some(search.best_score()),
            train: Some(compute_metrics(train.targets(), &train_pred)?),
            test: Some(compute_metrics(test.targets(), &test_pred)?),
        },
        predictions,
    })
}

/// Splits, tunes each family on the training rows, refits the winner and
/// scores it on both sides. A family that fails is reported as failed and
/// the run continues.
pub fn run_experiment(config: &ExperimentConfig, d: &Dataset) -> Result<ExperimentRun> {
    config.validate()?;
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    let split = split_indices(d.len(), config.test_fraction, seed)?;
    let mut cv_table = Vec::new();
    let mut families = Vec::new();
    let mut columns = Vec::new();
    for &family in &config.families {
        let mut cells = Vec::new();
        match run_family(
            family,
            config.grid_for(family),
            config.k_folds,
            seed,
            d,
            &split.train,
            &split.test,
            &mut cells,
        ) {
            Ok(fit) => {
                families.push(fit.outcome);
                columns.push((family, Some(fit.predictions)));
            }
            Err(e) => {
                families.push(FamilyOutcome {
                    family,
                    status: "failed",
                    error: Some(e.to_string()),
                    hyperparameters: None,
                    cv_mean_r2: None,
                    train: None,
                    test: None,
                });
                columns.push((family, None));
            }
        }
        cv_table.extend(cells);
    }
    let mut is_test = vec![false; d.len()];
    for &i in &split.test {
        is_test[i] = true;
    }
    Ok(ExperimentRun {
        report: ExperimentReport {
            seed,
            test_fraction: config.test_fraction,
            k_folds: config.k_folds,
            dataset: DatasetFingerprint::of(d),
            train_rows: split.train.len(),
            test_rows: split.test.len(),
            families,
        },
        cv_table,
        predictions: PredictionTable {
            is_test,
            y_true: d.targets().to_vec(),
            columns,
        },
    })
}

pub fn write_report_json<W: Write>(report: &ExperimentReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n").map_err(|e| Error::io("report", e))
}

/// Writes `row,split,y_true,<family>...`; a failed family leaves its column
/// empty.
pub fn write_predictions<W: Write>(t: &PredictionTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["row".to_string(), "split".into(), "y_true".into()];
    header.extend(t.columns.iter().map(|(f, _)| f.to_string()));
    out.write_record(&header)?;
    for i in 0..t.y_true.len() {
        let mut rec = vec![
            i.to_string(),
            if t.is_test[i] { "test" } else { "train" }.to_string(),
            t.y_true[i].to_string(),
        ];
        for (_, col) in &t.columns {
            rec.push(col.as_ref().map(|c| c[i].to_string()).unwrap_or_default());
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("predictions", e))
}

/// Aligned text table: family, train R², test R², MAE, RMSE, MAPE (test).
pub fn summary_table(report: &ExperimentReport) -> String {
    let mut s = format!(
        "{:<6} {:>9} {:>9} {:>10} {:>10} {:>9}\n",
        "family", "train_r2", "test_r2", "mae", "rmse", "mape_%"
    );
    for f in &report.families {
        match (&f.train, &f.test) {
            (Some(tr), Some(te)) => s.push_str(&format!(
                "{:<6} {:>9.4} {:>9.4} {:>10.4} {:>10.4} {:>9.2}\n",
                f.family.name(),
                tr.r2,
                te.r2,
                te.mae,
                te.rmse,
                te.mape
            )),
            _ => s.push_str(&format!("{:<6} {:>9}\n", f.family.name(), "failed")),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::varied_row;
    use crate::data::FeatureVector;

    fn linear_data(n: usize) -> Dataset {
        let rows: Vec<FeatureVector> = (0..n).map(varied_row).collect();
        let y = rows
            .iter()
            .map(|r| 2.0 + 0.5 * r.depth - 1.5 * r.exposure_time + 0.01 * r.water)
            .collect();
        Dataset::new(rows, y).unwrap()
    }

    fn grid(entries: &[(&str, Vec<Value>)]) -> Grid {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn odometer_order() {
        let g = grid(&[
            ("lengthscale", values(&[1.0, 2.0])),
            ("alpha", values(&[0.1, 0.2, 0.3])),
        ]);
        let pts = enumerate_grid(Family::Krr, &g).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].0, json!({"alpha": 0.1, "lengthscale": 1.0}));
        assert_eq!(pts[1].0, json!({"alpha": 0.1, "lengthscale": 2.0}));
        assert_eq!(pts[5].0, json!({"alpha": 0.3, "lengthscale": 2.0}));
    }

    #[test]
    fn grid_validation() {
        assert!(enumerate_grid(Family::Krr, &grid(&[("k", values(&[1.0]))])).is_err());
        assert!(enumerate_grid(Family::Krr, &grid(&[("alpha", vec![])])).is_err());
        assert_eq!(enumerate_grid(Family::Lr, &Grid::new()).unwrap().len(), 1);
        for f in Family::ALL {
            assert!(!enumerate_grid(f, &default_grid(f)).unwrap().is_empty());
        }
    }

    #[test]
    fn single_point_grid() {
        let d = linear_data(30);
        let r = grid_search_cv(&SearchSpec::new(Family::Lr, Grid::new()), &d).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.table.len(), 10);
        assert!(r.best_score() > 0.999);
    }

    #[test]
    fn shrinkage_loses_and_ties_go_first() {
        let d = linear_data(40);
        let mut spec = SearchSpec::new(
            Family::Krr,
            grid(&[
                ("alpha", values(&[1e12, 1e-6, 1e-6])),
                ("lengthscale", values(&[3.0])),
            ]),
        );
        spec.k = 5;
        let r = grid_search_cv(&spec, &d).unwrap();
        assert_eq!(r.best_point, 1);
        assert!(r.points[0].mean_r2 < 0.05);
        assert_eq!(r.points[1].mean_r2, r.points[2].mean_r2);
    }

    #[test]
    fn failing_point_scores_negative_infinity() {
        let d = linear_data(40);
        let mut spec = SearchSpec::new(
            Family::Svr,
            grid(&[("max_passes", vec![json!(0), json!(2000)])]),
        );
        spec.k = 4;
        let r = grid_search_cv(&spec, &d).unwrap();
        assert!(r.points[0].failed);
        assert_eq!(r.points[0].mean_r2, f64::NEG_INFINITY);
        assert_eq!(r.best_point, 1);
        assert!(r.table[0].error.is_some());
    }

    #[test]
    fn too_few_rows_for_folds() {
        let d = linear_data(8);
        assert!(grid_search_cv(&SearchSpec::new(Family::Lr, Grid::new()), &d).is_err());
    }

    #[test]
    fn validation_rows_do_not_leak() {
        let d = linear_data(30);
        let plan = kfold(30, 5, 3).unwrap();
        let (_, valid) = plan.split(2);
        let mut rows = d.features().to_vec();
        let mut y = d.targets().to_vec();
        for &i in &valid {
            rows[i].water = 1e6;
            rows[i].depth = 5e5;
            y[i] = 1e9;
        }
        let poisoned = Dataset::new(rows, y).unwrap();
        for f in [Family::Lr, Family::Krr, Family::Knn] {
            let hp = Hyperparameters::defaults(f);
            let a = fit_fold(&hp, &d, &plan, 2, 0).unwrap();
            let b = fit_fold(&hp, &poisoned, &plan, 2, 0).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn experiment_on_linear_data() {
        let d = linear_data(80);
        let mut cfg = ExperimentConfig::new(vec![Family::Lr, Family::Svr]);
        cfg.grids
            .insert(Family::Svr, grid(&[("max_passes", vec![json!(0)])]));
        let run = run_experiment(&cfg, &d).unwrap();
        let lr = &run.report.families[0];
        assert!(lr.succeeded());
        assert!(lr.test.as_ref().unwrap().r2 >= 0.999);
        assert_eq!(run.report.families[1].status, "failed");
        assert_eq!(run.report.train_rows, 60);
        assert_eq!(run.report.test_rows, 20);

        let again = run_experiment(&cfg, &d).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_report_json(&run.report, &mut a).unwrap();
        write_report_json(&again.report, &mut b).unwrap();
        assert_eq!(a, b);
        let mut p = Vec::new();
        write_predictions(&run.predictions, &mut p).unwrap();
        let text = String::from_utf8(p).unwrap();
        assert!(text.starts_with("row,split,y_true,LR,SVR\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(','));
        assert!(summary_table(&run.report).contains("failed"));
    }

    #[test]
    fn config_rejects_unknown_fields_and_empty_families() {
        assert!(
            serde_json::from_str::<ExperimentConfig>(r#"{"families":["LR"],"bogus":1}"#).is_err()
        );
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"families":[]}"#).unwrap();
        assert!(run_experiment(&cfg, &linear_data(20)).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"families":["KRR"],"grids":{"KRR":{"alpha":[0.1]}},"seed":3}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.grid_for(Family::Krr).len(), 1);
    }
}
