//! The seven regression families behind one fit/predict contract.
//!
//! Every [`Model`] owns the [`Standardizer`] fitted on its training rows:
//! inputs are standardized on the way in, predictions are mapped back to raw
//! target units on the way out. Kernel lengthscales are therefore expressed
//! in standardized-feature units.

pub mod gpr;
pub mod gru;
pub mod knn;
pub mod krr;
pub mod linear;
pub mod mlp;
mod optim;
pub mod svr;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{group_sequences, Dataset, FeatureVector, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::RbfKernelParams;

pub use gpr::GprParams;
pub use gru::{GruConfig, GruParams};
pub use knn::KnnParams;
pub use krr::KrrParams;
pub use linear::LinearParams;
pub use mlp::{MlpConfig, MlpParams};
pub use svr::SvrParams;

/// Current model document version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Lr,
    Knn,
    Krr,
    Svr,
    Gpr,
    Mlp,
    Gru,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Lr,
        Family::Knn,
        Family::Krr,
        Family::Svr,
        Family::Gpr,
        Family::Mlp,
        Family::Gru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lr => "LR",
            Family::Knn => "KNN",
            Family::Krr => "KRR",
            Family::Svr => "SVR",
            Family::Gpr => "GPR",
            Family::Mlp => "MLP",
            Family::Gru => "GRU",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::arg(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrrConfig {
    pub alpha: f64,
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl Default for KrrConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            lengthscale: 1.0,
            signal_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        let s = svr::SmoSettings::default();
        Self {
            c: s.c,
            epsilon: s.epsilon,
            lengthscale: 1.0,
            signal_variance: 1.0,
            tol: s.tol,
            max_passes: s.max_passes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprConfig {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-2,
        }
    }
}

/// Family tag plus that family's hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Hyperparameters {
    Lr(LinearConfig),
    Knn(KnnConfig),
    Krr(KrrConfig),
    Svr(SvrConfig),
    Gpr(GprConfig),
    Mlp(MlpConfig),
    Gru(GruConfig),
}

impl Hyperparameters {
    pub fn defaults(family: Family) -> Self {
        match family {
            Family::Lr => Self::Lr(LinearConfig::default()),
            Family::Knn => Self::Knn(KnnConfig::default()),
            Family::Krr => Self::Krr(KrrConfig::default()),
            Family::Svr => Self::Svr(SvrConfig::default()),
            Family::Gpr => Self::Gpr(GprConfig::default()),
            Family::Mlp => Self::Mlp(MlpConfig::default()),
            Family::Gru => Self::Gru(GruConfig::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Lr(_) => Family::Lr,
            Self::Knn(_) => Family::Knn,
            Self::Krr(_) => Family::Krr,
            Self::Svr(_) => Family::Svr,
            Self::Gpr(_) => Family::Gpr,
            Self::Mlp(_) => Family::Mlp,
            Self::Gru(_) => Family::Gru,
        }
    }

    /// Parses a JSON object of overrides on top of the family defaults.
    /// Names that do not belong to the family are rejected.
    pub fn from_json(family: Family, value: &Value) -> Result<Self> {
        let v = if value.is_null() {
            Value::Object(Default::default())
        } else {
            value.clone()
        };
        let bad = |e: serde_json::Error| Error::arg(format!("{family} hyperparameters: {e}"));
        Ok(match family {
            Family::Lr => Self::Lr(serde_json::from_value(v).map_err(bad)?),
            Family::Knn => Self::Knn(serde_json::from_value(v).map_err(bad)?),
            Family::Krr => Self::Krr(serde_json::from_value(v).map_err(bad)?),
            Family::Svr => Self::Svr(serde_json::from_value(v).map_err(bad)?),
            Family::Gpr => Self::Gpr(serde_json::from_value(v).map_err(bad)?),
            Family::Mlp => Self::Mlp(serde_json::from_value(v).map_err(bad)?),
            Family::Gru => Self::Gru(serde_json::from_value(v).map_err(bad)?),
        })
    }

    pub fn to_json(&self) -> Value {
        let r = match self {
            Self::Lr(c) => serde_json::to_value(c),
            Self::Knn(c) => serde_json::to_value(c),
            Self::Krr(c) => serde_json::to_value(c),
            Self::Svr(c) => serde_json::to_value(c),
            Self::Gpr(c) => serde_json::to_value(c),
            Self::Mlp(c) => serde_json::to_value(c),
            Self::Gru(c) => serde_json::to_value(c),
        };
        r.expect("hyperparameters serialize")
    }
}

/// Family-specific fitted state, on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum FittedParams {
    Lr(LinearParams),
    Knn(KnnParams),
    Krr(KrrParams),
    Svr(SvrParams),
    Gpr(GprParams),
    Mlp(MlpParams),
    Gru(GruParams),
}

impl FittedParams {
    fn to_json(&self) -> Value {
        let r = match self {
            Self::Lr(p) => serde_json::to_value(p),
            Self::Knn(p) => serde_json::to_value(p),
            Self::Krr(p) => serde_json::to_value(p),
            Self::Svr(p) => serde_json::to_value(p),
            Self::Gpr(p) => serde_json::to_value(p),
            Self::Mlp(p) => serde_json::to_value(p),
            Self::Gru(p) => serde_json::to_value(p),
        };
        r.expect("parameters serialize")
    }

    fn from_json(family: Family, v: Value) -> Result<Self> {
        Ok(match family {
            Family::Lr => Self::Lr(serde_json::from_value(v)?),
            Family::Knn => Self::Knn(serde_json::from_value(v)?),
            Family::Krr => Self::Krr(serde_json::from_value(v)?),
            Family::Svr => Self::Svr(serde_json::from_value(v)?),
            Family::Gpr => Self::Gpr(serde_json::from_value(v)?),
            Family::Mlp => Self::Mlp(serde_json::from_value(v)?),
            Family::Gru => Self::Gru(serde_json::from_value(v)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub n_train: usize,
}

/// Anything that maps raw feature rows to raw chloride predictions.
pub trait Predictor {
    fn predict(&self, rows: &[FeatureVector]) -> Result<Vec<f64>>;

    /// Short label for reports, e.g. `GPR`.
    fn tag(&self) -> String;

    /// Hyperparameters as JSON, for sweep metadata.
    fn describe(&self) -> Value {
        Value::Null
    }
}

/// A fitted estimator of any family. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    hyperparameters: Hyperparameters,
    standardizer: Standardizer,
    params: FittedParams,
    meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    family: Family,
    hyperparameters: Value,
    standardizer: Standardizer,
    parameters: Value,
    training: TrainingMeta,
}

impl Model {
    /// Fits the standardizer on `train`, then the estimator on the
    /// standardized rows. `seed` drives any stochastic training.
    pub fn fit(hp: &Hyperparameters, train: &Dataset, seed: u64) -> Result<Self> {
        let standardizer = Standardizer::fit(train)?;
        let z = standardizer.apply(train);
        let (x, y) = (&z.x, &z.y[..]);
        let params = match hp {
            Hyperparameters::Lr(_) => FittedParams::Lr(linear::fit_linear(x, y)?),
            Hyperparameters::Knn(c) => FittedParams::Knn(knn::fit_knn(x, y, c.k)?),
            Hyperparameters::Krr(c) => {
                let kp = RbfKernelParams::new(c.lengthscale, c.signal_variance)?;
                FittedParams::Krr(krr::fit_krr(x, y, kp, c.alpha)?)
            }
            Hyperparameters::Svr(c) => {
                let kp = RbfKernelParams::new(c.lengthscale, c.signal_variance)?;
                let s = svr::SmoSettings {
                    c: c.c,
                    epsilon: c.epsilon,
                    tol: c.tol,
                    max_passes: c.max_passes,
                };
                FittedParams::Svr(svr::fit_svr(x, y, kp, &s)?)
            }
            Hyperparameters::Gpr(c) => {
                let kp = RbfKernelParams::new(c.lengthscale, c.signal_variance)?;
                FittedParams::Gpr(gpr::fit_gpr(x, y, kp, c.noise_variance)?)
            }
            Hyperparameters::Mlp(c) => FittedParams::Mlp(mlp::fit_mlp(x, y, c, seed)?),
            Hyperparameters::Gru(c) => {
                let seqs = group_sequences(train.features());
                FittedParams::Gru(gru::fit_gru(x, y, &seqs.sequences, c, seed)?)
            }
        };
        Ok(Self {
            hyperparameters: hp.clone(),
            standardizer,
            params,
            meta: TrainingMeta {
                seed,
                n_train: train.len(),
            },
        })
    }

    pub fn family(&self) -> Family {
        self.hyperparameters.family()
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyperparameters
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn params(&self) -> &FittedParams {
        &self.params
    }

    pub fn training(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Predictions in standardized target units.
    fn predict_standardized(&self, rows: &[FeatureVector]) -> Vec<f64> {
        let x = self.standardizer.transform_features(rows);
        match &self.params {
            FittedParams::Lr(p) => p.predict(&x),
            FittedParams::Knn(p) => p.predict(&x),
            FittedParams::Krr(p) => p.predict(&x),
            FittedParams::Svr(p) => p.predict(&x),
            FittedParams::Gpr(p) => p.predict(&x),
            FittedParams::Mlp(p) => p.predict(&x),
            FittedParams::Gru(p) => {
                // rows of one mixture are evaluated as a single time-ordered sequence
                let mut out = vec![0.0; rows.len()];
                for seq in group_sequences(rows).sequences {
                    let inputs: Vec<&[f64]> = seq.iter().map(|&i| x.row(i)).collect();
                    for (&i, v) in seq.iter().zip(p.run_sequence(&inputs)) {
                        out[i] = v;
                    }
                }
                out
            }
        }
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: FORMAT_VERSION,
            family: self.family(),
            hyperparameters: self.hyperparameters.to_json(),
            standardizer: self.standardizer.clone(),
            parameters: self.params.to_json(),
            training: self.meta.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let hyperparameters = Hyperparameters::from_json(doc.family, &doc.hyperparameters)?;
        let params = FittedParams::from_json(doc.family, doc.parameters)?;
        Ok(Self {
            hyperparameters,
            standardizer: doc.standardizer,
            params,
            meta: doc.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }
}

impl Predictor for Model {
    fn predict(&self, rows: &[FeatureVector]) -> Result<Vec<f64>> {
        for (i, r) in rows.iter().enumerate() {
            if r.to_array().iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!(
                    "query row {i} has a non-finite feature"
                )));
            }
        }
        Ok(self.standardizer.invert(&self.predict_standardized(rows)))
    }

    fn tag(&self) -> String {
        self.family().to_string()
    }

    fn describe(&self) -> Value {
        self.hyperparameters.to_json()
    }
}
