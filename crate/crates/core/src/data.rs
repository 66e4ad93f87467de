//! Dataset schema, CSV ingestion, standardization, splitting and grouping.
//!
//! Every record carries fourteen input features in a fixed order (four
//! exposure descriptors followed by ten mixture quantities) and one chloride
//! target. The target is kept in whatever unit the source file uses.
//!
//! Standardization uses the *population* standard deviation (divide by `n`),
//! so a fitted [`Standardizer`] maps its own training columns to exactly zero
//! mean and unit spread.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const FEATURE_COUNT: usize = 14;

/// Seed used for splits and folds when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 42;

/// Canonical header of the target column.
pub const TARGET_COLUMN: &str = "chloride_content";

/// One of the fourteen input features, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    SurfaceChloride,
    ExposureTime,
    Temperature,
    Depth,
    Water,
    Srpc,
    Opc,
    WbRatio,
    FlyAsh,
    SilicaFume,
    Ggbs,
    Superplasticizer,
    FineAgg,
    CoarseAgg,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::SurfaceChloride,
        Feature::ExposureTime,
        Feature::Temperature,
        Feature::Depth,
        Feature::Water,
        Feature::Srpc,
        Feature::Opc,
        Feature::WbRatio,
        Feature::FlyAsh,
        Feature::SilicaFume,
        Feature::Ggbs,
        Feature::Superplasticizer,
        Feature::FineAgg,
        Feature::CoarseAgg,
    ];

    /// The ten mixture-composition features.
    pub const MIXTURE: [Feature; 10] = [
        Feature::Water,
        Feature::Srpc,
        Feature::Opc,
        Feature::WbRatio,
        Feature::FlyAsh,
        Feature::SilicaFume,
        Feature::Ggbs,
        Feature::Superplasticizer,
        Feature::FineAgg,
        Feature::CoarseAgg,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short identifier, e.g. `fly_ash`.
    pub fn id(self) -> &'static str {
        match self {
            Feature::SurfaceChloride => "surface_chloride",
            Feature::ExposureTime => "exposure_time",
            Feature::Temperature => "temperature",
            Feature::Depth => "depth",
            Feature::Water => "water",
            Feature::Srpc => "srpc",
            Feature::Opc => "opc",
            Feature::WbRatio => "wb_ratio",
            Feature::FlyAsh => "fly_ash",
            Feature::SilicaFume => "silica_fume",
            Feature::Ggbs => "ggbs",
            Feature::Superplasticizer => "superplasticizer",
            Feature::FineAgg => "fine_agg",
            Feature::CoarseAgg => "coarse_agg",
        }
    }

    /// Canonical CSV header, with the unit suffix.
    pub fn column(self) -> &'static str {
        match self {
            Feature::SurfaceChloride => "surface_chloride_g_l",
            Feature::ExposureTime => "exposure_time_yr",
            Feature::Temperature => "temperature_c",
            Feature::Depth => "depth_mm",
            Feature::Water => "water_kg_m3",
            Feature::Srpc => "srpc_kg_m3",
            Feature::Opc => "opc_kg_m3",
            Feature::WbRatio => "wb_ratio",
            Feature::FlyAsh => "fly_ash_kg_m3",
            Feature::SilicaFume => "silica_fume_kg_m3",
            Feature::Ggbs => "ggbs_kg_m3",
            Feature::Superplasticizer => "superplasticizer_kg_m3",
            Feature::FineAgg => "fine_agg_kg_m3",
            Feature::CoarseAgg => "coarse_agg_kg_m3",
        }
    }

    pub fn is_binder(self) -> bool {
        matches!(
            self,
            Feature::Opc | Feature::Srpc | Feature::FlyAsh | Feature::SilicaFume | Feature::Ggbs
        )
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Feature {
    type Err = Error;

    /// Accepts either the short identifier or the canonical column header.
    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.id() == s || f.column() == s)
            .ok_or_else(|| {
                if s == TARGET_COLUMN || s == "chloride" {
                    Error::arg(format!("`{s}` is the target, not an input feature"))
                } else {
                    Error::arg(format!("unknown feature `{s}`"))
                }
            })
    }
}

/// Exposure conditions and mixture proportions of one specimen location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// g/l
    pub surface_chloride: f64,
    /// years
    pub exposure_time: f64,
    /// °C
    pub temperature: f64,
    /// mm from the exposed surface
    pub depth: f64,
    /// kg/m³
    pub water: f64,
    pub srpc: f64,
    pub opc: f64,
    /// water-to-binder mass ratio
    pub wb_ratio: f64,
    pub fly_ash: f64,
    pub silica_fume: f64,
    pub ggbs: f64,
    pub superplasticizer: f64,
    pub fine_agg: f64,
    pub coarse_agg: f64,
}

impl FeatureVector {
    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            surface_chloride: v[0],
            exposure_time: v[1],
            temperature: v[2],
            depth: v[3],
            water: v[4],
            srpc: v[5],
            opc: v[6],
            wb_ratio: v[7],
            fly_ash: v[8],
            silica_fume: v[9],
            ggbs: v[10],
            superplasticizer: v[11],
            fine_agg: v[12],
            coarse_agg: v[13],
        }
    }

    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.surface_chloride,
            self.exposure_time,
            self.temperature,
            self.depth,
            self.water,
            self.srpc,
            self.opc,
            self.wb_ratio,
            self.fly_ash,
            self.silica_fume,
            self.ggbs,
            self.superplasticizer,
            self.fine_agg,
            self.coarse_agg,
        ]
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.to_array()[f.index()]
    }

    pub fn set(&mut self, f: Feature, value: f64) {
        let mut a = self.to_array();
        a[f.index()] = value;
        *self = Self::from_array(a);
    }

    /// Total cementitious binder: OPC + SRPC + fly ash + silica fume + GGBS.
    pub fn binder(&self) -> f64 {
        self.opc + self.srpc + self.fly_ash + self.silica_fume + self.ggbs
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for f in Feature::ALL {
            let v = self.get(f);
            if !v.is_finite() {
                return Err(format!("{} is not finite", f.id()));
            }
            if v < 0.0 {
                return Err(format!("{} is negative ({v})", f.id()));
            }
        }
        if !(self.wb_ratio > 0.0 && self.wb_ratio <= 2.0) {
            return Err(format!("wb_ratio {} outside (0, 2]", self.wb_ratio));
        }
        if self.exposure_time <= 0.0 {
            return Err(format!(
                "exposure_time {} must be positive",
                self.exposure_time
            ));
        }
        Ok(())
    }
}

/// Ordered rows of features and chloride targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<FeatureVector>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<FeatureVector>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != targets.len() {
            return Err(Error::dims(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        for (i, (f, t)) in features.iter().zip(&targets).enumerate() {
            f.validate()
                .map_err(|reason| Error::InvalidRecord { row: i, reason })?;
            if !t.is_finite() {
                return Err(Error::InvalidRecord {
                    row: i,
                    reason: "target is not finite".into(),
                });
            }
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> [&'static str; FEATURE_COUNT] {
        Feature::ALL.map(Feature::column)
    }

    pub fn target_name(&self) -> &'static str {
        TARGET_COLUMN
    }

    pub fn column(&self, f: Feature) -> impl Iterator<Item = f64> + Clone + '_ {
        self.features.iter().map(move |r| r.get(f))
    }

    /// Rows at `idx`, in that order. Returns `None` for an empty selection.
    pub fn subset(&self, idx: &[usize]) -> Option<Dataset> {
        if idx.is_empty() {
            return None;
        }
        Some(Dataset {
            features: idx.iter().map(|&i| self.features[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        })
    }

    /// Feature means, used as a cheap dataset fingerprint.
    pub fn column_means(&self) -> [f64; FEATURE_COUNT] {
        let n = self.len() as f64;
        let mut sums = [0.0; FEATURE_COUNT];
        for r in &self.features {
            for (s, v) in sums.iter_mut().zip(r.to_array()) {
                *s += v;
            }
        }
        sums.map(|s| s / n)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = Feature::ALL.iter().map(|f| f.column()).collect();
        header.push(TARGET_COLUMN);
        out.write_record(&header)?;
        for (f, t) in self.features.iter().zip(&self.targets) {
            let mut rec: Vec<String> = f.to_array().iter().map(|v| v.to_string()).collect();
            rec.push(t.to_string());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Renames external CSV headers onto the canonical ones.
///
/// JSON form: `{"column_map": {"external header": "canonical header"}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    #[serde(default)]
    pub column_map: HashMap<String, String>,
}

impl ColumnMap {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn canonical<'a>(&'a self, header: &'a str) -> &'a str {
        self.column_map.get(header).map_or(header, String::as_str)
    }
}

pub fn load_dataset(path: &Path, schema: &ColumnMap) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

/// Parses a dataset from CSV text. Reported row numbers are file lines, with
/// the header on line 1.
pub fn read_dataset<R: Read>(reader: R, schema: &ColumnMap) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        position.entry(schema.canonical(h)).or_insert(i);
    }
    let mut columns = [0usize; FEATURE_COUNT + 1];
    let required = Feature::ALL
        .iter()
        .map(|f| f.column())
        .chain(std::iter::once(TARGET_COLUMN));
    for (slot, name) in columns.iter_mut().zip(required) {
        *slot = *position.get(name).ok_or_else(|| Error::MissingColumn {
            column: name.into(),
        })?;
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mut values = [0.0; FEATURE_COUNT + 1];
        for (k, (&col, v)) in columns.iter().zip(values.iter_mut()).enumerate() {
            let name = if k < FEATURE_COUNT {
                Feature::ALL[k].column()
            } else {
                TARGET_COLUMN
            };
            let cell = rec.get(col).unwrap_or("");
            *v = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: name.into(),
                    value: cell.into(),
                })?;
        }
        let mut fv = [0.0; FEATURE_COUNT];
        fv.copy_from_slice(&values[..FEATURE_COUNT]);
        let fv = FeatureVector::from_array(fv);
        fv.validate()
            .map_err(|reason| Error::InvalidRecord { row: line, reason })?;
        features.push(fv);
        targets.push(values[FEATURE_COUNT]);
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(features, targets)
}

/// Row indices of a holdout split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random holdout split with `round(n·test_fraction)` test rows.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::arg(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::arg(format!(
            "a test fraction of {test_fraction} on {n} rows leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitPlan { train, test })
}

pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let plan = split_indices(d.len(), test_fraction, seed)?;
    // both sides are nonempty by construction
    Ok((
        d.subset(&plan.train).expect("nonempty train"),
        d.subset(&plan.test).expect("nonempty test"),
    ))
}

/// Standardized design matrix and target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

/// Per-column affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: [f64; FEATURE_COUNT],
    pub stds: [f64; FEATURE_COUNT],
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_and_population_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::arg("standardizer needs at least two rows"));
        }
        let mut means = [0.0; FEATURE_COUNT];
        let mut stds = [0.0; FEATURE_COUNT];
        for f in Feature::ALL {
            let (m, s) = mean_and_population_std(train.column(f));
            if !(s > 0.0) {
                return Err(Error::DegenerateColumn {
                    column: f.column().into(),
                });
            }
            means[f.index()] = m;
            stds[f.index()] = s;
        }
        let (target_mean, target_std) = mean_and_population_std(train.targets().iter().copied());
        if !(target_std > 0.0) {
            return Err(Error::DegenerateColumn {
                column: TARGET_COLUMN.into(),
            });
        }
        Ok(Self {
            means,
            stds,
            target_mean,
            target_std,
        })
    }

    pub fn transform_row(&self, f: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut out = f.to_array();
        for ((v, m), s) in out.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = (*v - m) / s;
        }
        out
    }

    pub fn transform_features(&self, rows: &[FeatureVector]) -> DenseMatrix {
        let data: Vec<f64> = rows.iter().flat_map(|r| self.transform_row(r)).collect();
        DenseMatrix::new(rows.len(), FEATURE_COUNT, data).expect("finite standardized features")
    }

    pub fn inverse_row(&self, z: &[f64; FEATURE_COUNT]) -> FeatureVector {
        let mut out = *z;
        for ((v, m), s) in out.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = *v * s + m;
        }
        FeatureVector::from_array(out)
    }

    pub fn transform_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_std)
            .collect()
    }

    /// Maps standardized target values back to raw units.
    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| v * self.target_std + self.target_mean)
            .collect()
    }

    pub fn apply(&self, d: &Dataset) -> Standardized {
        Standardized {
            x: self.transform_features(d.features()),
            y: self.transform_target(d.targets()),
        }
    }
}

/// Fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// `(training rows, validation rows)` for fold `fold`, each ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == fold {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Shuffled k-fold plan; fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::arg(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if k > n {
        return Err(Error::arg(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

/// Rows grouped into time-ordered sequences for the recurrent model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub sequences: Vec<Vec<usize>>,
    pub group_key: Vec<Feature>,
}

impl SequenceSet {
    pub fn total_len(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

/// Groups rows that share every feature except exposure time and depth.
///
/// Sequences appear in order of their first row; within a sequence rows are
/// sorted by `(exposure_time, depth)`, ties by row index.
pub fn group_sequences(rows: &[FeatureVector]) -> SequenceSet {
    let group_key: Vec<Feature> = Feature::ALL
        .into_iter()
        .filter(|f| !matches!(f, Feature::ExposureTime | Feature::Depth))
        .collect();
    let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut sequences: Vec<Vec<usize>> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        // +0.0 and -0.0 must land in the same group
        let key: Vec<u64> = group_key
            .iter()
            .map(|&f| (r.get(f) + 0.0).to_bits())
            .collect();
        let next = sequences.len();
        let s = *slot.entry(key).or_insert(next);
        if s == next {
            sequences.push(Vec::new());
        }
        sequences[s].push(i);
    }
    for seq in &mut sequences {
        seq.sort_by(|&a, &b| {
            let (ra, rb) = (&rows[a], &rows[b]);
            ra.exposure_time
                .total_cmp(&rb.exposure_time)
                .then(ra.depth.total_cmp(&rb.depth))
                .then(a.cmp(&b))
        });
    }
    SequenceSet {
        sequences,
        group_key,
    }
}
