//! Surrogate regressors for chloride ingress in concrete.
//!
//! The crate reads mixture/exposure records, fits one of seven regression
//! families (linear, k-nearest neighbours, kernel ridge, ε-SVR, Gaussian
//! process, MLP, GRU), tunes them by k-fold grid search, and runs
//! one-at-a-time sensitivity sweeps around a reference mixture. A closed-form
//! Fickian profile doubles as a synthetic data source and as a model with
//! known trends.
//!
//! ```
//! use clingress::prelude::*;
//!
//! let data = generate_dataset(&SynthConfig { n_mixtures: 8, ..Default::default() })?.dataset;
//! let (train, test) = train_test_split(&data, 0.25, 42)?;
//! let model = Model::fit(&Hyperparameters::defaults(Family::Gpr), &train, 42)?;
//! let m = compute_metrics(test.targets(), &model.predict(test.features())?)?;
//! assert!(m.r2 > 0.5);
//! # Ok::<(), clingress::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod sensitivity;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

pub mod prelude {
    pub use crate::data::{
        group_sequences, kfold, load_dataset, train_test_split, ColumnMap, Dataset, Feature,
        FeatureVector, Standardizer,
    };
    pub use crate::error::{Error, Result};
    pub use crate::estimators::{Family, Hyperparameters, Model, Predictor};
    pub use crate::metrics::{compute_metrics, MetricsReport};
    pub use crate::pipeline::{grid_search_cv, run_experiment, ExperimentConfig, SearchSpec};
    pub use crate::sensitivity::{baseline_scenario, sweep, temporal_curve, SweepOptions};
    pub use crate::synth::{generate_dataset, FickOracle, SynthConfig};
}

/// Guide chapters, compiled as doctests so their snippets stay current.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/data.md")]
    pub struct Data;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/kernels.md")]
    pub struct Kernels;
    #[doc = include_str!("../../../book/src/svr.md")]
    pub struct Svr;
    #[doc = include_str!("../../../book/src/neural.md")]
    pub struct Neural;
    #[doc = include_str!("../../../book/src/tuning.md")]
    pub struct Tuning;
    #[doc = include_str!("../../../book/src/fick.md")]
    pub struct Fick;
    #[doc = include_str!("../../../book/src/sensitivity.md")]
    pub struct Sensitivity;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
