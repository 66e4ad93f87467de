//! One-at-a-time sweeps around a reference mixture.
//!
//! A sweep copies the baseline, overwrites a single feature with each level
//! and each exposure time, and predicts. Nothing else changes: w/b is left
//! alone unless [`SweepOptions::couple_wb`] asks for it to follow water and
//! binder.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::data::{Dataset, Feature, FeatureVector};
use crate::error::{Error, Result};
use crate::estimators::Predictor;

pub const DEFAULT_LEVELS: usize = 5;
pub const DEFAULT_TIMES: usize = 50;
/// Exposure of the reference specimen, years.
pub const BASELINE_EXPOSURE_YR: f64 = 1.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineScenario {
    pub features: FeatureVector,
    /// mm
    pub depth: f64,
    /// years, strictly increasing and positive
    pub times: Vec<f64>,
}

/// `n` points `horizon·i/n`, `i = 1..=n`.
pub fn time_grid(horizon: f64, n: usize) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) || n == 0 {
        return Err(Error::arg(
            "time grid needs a positive horizon and at least one point",
        ));
    }
    Ok((1..=n).map(|i| horizon * i as f64 / n as f64).collect())
}

/// The reference mixture: 184 water, 460 OPC, 100 fly ash, 700 fine and
/// 1050 coarse aggregate, 1.8 superplasticizer (kg/m³), 19.6 g/l surface
/// chloride, 9 °C, evaluated 10 mm deep over 1.3 years.
pub fn baseline_scenario() -> BaselineScenario {
    let features = FeatureVector {
        surface_chloride: 19.6,
        exposure_time: BASELINE_EXPOSURE_YR,
        temperature: 9.0,
        depth: 10.0,
        water: 184.0,
        srpc: 0.0,
        opc: 460.0,
        wb_ratio: 184.0 / 560.0,
        fly_ash: 100.0,
        silica_fume: 0.0,
        ggbs: 0.0,
        superplasticizer: 1.8,
        fine_agg: 700.0,
        coarse_agg: 1050.0,
    };
    BaselineScenario {
        features,
        depth: 10.0,
        times: time_grid(BASELINE_EXPOSURE_YR, DEFAULT_TIMES).expect("static grid"),
    }
}

impl BaselineScenario {
    /// Same mixture, time grid stretched to `horizon` years.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Ok(Self {
            times: time_grid(horizon, self.times.len())?,
            ..self.clone()
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.depth >= 0.0) {
            return Err(Error::arg("evaluation depth must be >= 0"));
        }
        if self.times.is_empty()
            || self.times[0] <= 0.0
            || self.times.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::arg(
                "time grid must be positive and strictly increasing",
            ));
        }
        Ok(())
    }
}

/// Exact column minimum and maximum.
pub fn feature_range(d: &Dataset, f: Feature) -> (f64, f64) {
    d.column(f)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// `n` evenly spaced values with both ends hit exactly.
pub fn levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let mut out: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    out[n - 1] = hi;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub n_levels: usize,
    /// Recompute w/b = water / binder whenever water or a binder is swept.
    pub couple_wb: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_levels: DEFAULT_LEVELS,
            couple_wb: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSurface {
    pub feature: Feature,
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
    pub depth: f64,
    /// `levels.len() × times.len()`, level-major.
    pub values: Vec<f64>,
    pub model: String,
    pub range: (f64, f64),
    /// The observed range is a single value.
    pub degenerate: bool,
    pub couple_wb: bool,
}

impl SweepSurface {
    pub fn value(&self, level: usize, time: usize) -> f64 {
        self.values[level * self.times.len() + time]
    }

    pub fn curve(&self, level: usize) -> &[f64] {
        let n = self.times.len();
        &self.values[level * n..(level + 1) * n]
    }
}

fn sweep_row(
    b: &BaselineScenario,
    f: Feature,
    level: f64,
    t: f64,
    couple_wb: bool,
) -> FeatureVector {
    let mut r = b.features;
    r.depth = b.depth;
    r.set(f, level);
    r.exposure_time = t;
    if couple_wb && (f == Feature::Water || f.is_binder()) {
        r.wb_ratio = r.water / r.binder();
    }
    r
}

pub fn sweep(
    m: &dyn Predictor,
    b: &BaselineScenario,
    feature: Feature,
    d: &Dataset,
    opts: SweepOptions,
) -> Result<SweepSurface> {
    b.validate()?;
    if feature == Feature::ExposureTime {
        return Err(Error::arg(
            "exposure time is the curve axis and cannot be swept",
        ));
    }
    let range = feature_range(d, feature);
    let degenerate = range.0 == range.1;
    if opts.n_levels == 0 || (opts.n_levels < 2 && !degenerate) {
        return Err(Error::arg("a sweep needs at least two levels"));
    }
    let lv = levels(range.0, range.1, opts.n_levels);
    let rows: Vec<FeatureVector> = lv
        .iter()
        .flat_map(|&l| b.times.iter().map(move |&t| (l, t)))
        .map(|(l, t)| sweep_row(b, feature, l, t, opts.couple_wb))
        .collect();
    let values = m.predict(&rows)?;
    Ok(SweepSurface {
        feature,
        levels: lv,
        times: b.times.clone(),
        depth: b.depth,
        values,
        model: m.tag(),
        range,
        degenerate,
        couple_wb: opts.couple_wb,
    })
}

/// Predictions along `times` with the depth and every other field fixed.
pub fn temporal_curve(
    m: &dyn Predictor,
    f: &FeatureVector,
    depth: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let rows: Vec<FeatureVector> = times
        .iter()
        .map(|&t| FeatureVector {
            depth,
            exposure_time: t,
            ..*f
        })
        .collect();
    m.predict(&rows)
}

/// `feature,level,time_yr,depth_mm,prediction`, level-major then time.
pub fn write_sweep_csv<W: Write>(surfaces: &[SweepSurface], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "level", "time_yr", "depth_mm", "prediction"])?;
    for s in surfaces {
        for (i, l) in s.levels.iter().enumerate() {
            for (j, t) in s.times.iter().enumerate() {
                out.write_record([
                    s.feature.id().to_string(),
                    l.to_string(),
                    t.to_string(),
                    s.depth.to_string(),
                    s.value(i, j).to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("sweep table", e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSweepMeta {
    pub feature: Feature,
    pub min: f64,
    pub max: f64,
    pub levels: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeta {
    pub model: String,
    pub hyperparameters: Value,
    pub baseline: BaselineScenario,
    pub couple_wb: bool,
    pub full_horizon: bool,
    pub features: Vec<FeatureSweepMeta>,
}

impl SweepMeta {
    pub fn new(
        m: &dyn Predictor,
        b: &BaselineScenario,
        surfaces: &[SweepSurface],
        full_horizon: bool,
    ) -> Self {
        Self {
            model: m.tag(),
            hyperparameters: m.describe(),
            baseline: b.clone(),
            couple_wb: surfaces.first().is_some_and(|s| s.couple_wb),
            full_horizon,
            features: surfaces
                .iter()
                .map(|s| FeatureSweepMeta {
                    feature: s.feature,
                    min: s.range.0,
                    max: s.range.1,
                    levels: s.levels.clone(),
                    degenerate: s.degenerate,
                })
                .collect(),
        }
    }
}

pub fn write_sweep_meta<W: Write>(meta: &SweepMeta, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, meta)?;
    w.write_all(b"\n").map_err(|e| Error::io("sweep meta", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::varied_row;
    use crate::estimators::{Family, Hyperparameters, Model};
    use crate::synth::{generate_dataset, FickOracle, SynthConfig};

    fn dataset(rows: Vec<FeatureVector>) -> Dataset {
        let y = (0..rows.len()).map(|i| i as f64).collect();
        Dataset::new(rows, y).unwrap()
    }

    #[test]
    fn baseline_values() {
        let b = baseline_scenario();
        assert_eq!(b.features.water, 184.0);
        assert_eq!(b.features.surface_chloride, 19.6);
        assert!((b.features.wb_ratio - 0.328_57).abs() < 1e-5);
        assert_eq!(b.times.len(), 50);
        assert_eq!(*b.times.last().unwrap(), 1.3);
        assert!(b.times[0] > 0.0);
    }

    #[test]
    fn ranges_and_levels() {
        let mut rows: Vec<FeatureVector> = (0..3).map(varied_row).collect();
        for (r, v) in rows.iter_mut().zip([1.0, 5.0, 3.0]) {
            r.fly_ash = v;
            r.ggbs = 2.0;
        }
        let d = dataset(rows.clone());
        assert_eq!(feature_range(&d, Feature::FlyAsh), (1.0, 5.0));
        assert_eq!(feature_range(&d, Feature::Ggbs), (2.0, 2.0));
        let one = dataset(rows[..1].to_vec());
        assert_eq!(feature_range(&one, Feature::FlyAsh), (1.0, 1.0));
        let lv = levels(0.1, 0.7, 7);
        assert_eq!((lv[0], lv[6]), (0.1, 0.7));
        assert!(lv.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn shape_isolation_and_degenerate_flag() {
        let mut rows: Vec<FeatureVector> = (0..20).map(varied_row).collect();
        rows.iter_mut().for_each(|r| r.superplasticizer = 1.8);
        let d = dataset(rows);
        let b = baseline_scenario();
        let before = b.clone();
        let s = sweep(
            &FickOracle::default(),
            &b,
            Feature::Water,
            &d,
            SweepOptions::default(),
        )
        .unwrap();
        assert_eq!(s.values.len(), 250);
        assert_eq!(b, before);
        let (lo, hi) = feature_range(&d, Feature::Water);
        assert_eq!((s.levels[0], s.levels[4]), (lo, hi));
        let s = sweep(
            &FickOracle::default(),
            &b,
            Feature::Superplasticizer,
            &d,
            SweepOptions::default(),
        )
        .unwrap();
        assert!(s.degenerate);
        assert!(s.levels.iter().all(|&l| l == 1.8));
        assert!(sweep(
            &FickOracle::default(),
            &b,
            Feature::ExposureTime,
            &d,
            SweepOptions::default()
        )
        .is_err());
        let one = SweepOptions {
            n_levels: 1,
            couple_wb: false,
        };
        assert!(sweep(&FickOracle::default(), &b, Feature::Water, &d, one).is_err());
    }

    #[test]
    fn no_op_point_reproduces_baseline() {
        let b = baseline_scenario();
        let mut rows: Vec<FeatureVector> = (0..30).map(varied_row).collect();
        for (i, r) in rows.iter_mut().enumerate() {
            r.opc = b.features.opc + 5.0 * i as f64;
        }
        let d = Dataset::new(
            rows.clone(),
            rows.iter()
                .map(|r| r.depth * 0.3 + r.opc * 0.01 + r.exposure_time)
                .collect(),
        )
        .unwrap();
        for f in [Family::Lr, Family::Krr, Family::Knn, Family::Gpr] {
            let m = Model::fit(&Hyperparameters::defaults(f), &d, 0).unwrap();
            let s = sweep(&m, &b, Feature::Opc, &d, SweepOptions::default()).unwrap();
            assert_eq!(s.levels[0], b.features.opc);
            let base = m.predict(&[b.features]).unwrap()[0];
            assert_eq!(s.value(0, 49).to_bits(), base.to_bits(), "{f}");
        }
    }

    #[test]
    fn couple_wb_recomputes_ratio() {
        let d = dataset((0..5).map(varied_row).collect());
        let b = baseline_scenario();
        let row = sweep_row(&b, Feature::Water, 200.0, 1.0, true);
        assert_eq!(row.wb_ratio, 200.0 / 560.0);
        let row = sweep_row(&b, Feature::Water, 200.0, 1.0, false);
        assert_eq!(row.wb_ratio, b.features.wb_ratio);
        let coupled = SweepOptions {
            couple_wb: true,
            ..Default::default()
        };
        let a = sweep(&FickOracle::default(), &b, Feature::Water, &d, coupled).unwrap();
        let c = sweep(
            &FickOracle::default(),
            &b,
            Feature::Water,
            &d,
            SweepOptions::default(),
        )
        .unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn oracle_trends() {
        let d = generate_dataset(&SynthConfig {
            n_mixtures: 10,
            ..Default::default()
        })
        .unwrap()
        .dataset;
        let b = baseline_scenario();
        let o = FickOracle::default();
        let s = sweep(&o, &b, Feature::Depth, &d, SweepOptions::default()).unwrap();
        for j in 0..s.times.len() {
            for i in 1..s.levels.len() {
                assert!(s.value(i, j) < s.value(i - 1, j));
            }
        }
        let curve = temporal_curve(&o, &b.features, 10.0, &b.times).unwrap();
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(
            curve,
            temporal_curve(&o, &b.features, 10.0, &b.times).unwrap()
        );
        let single = temporal_curve(&o, &b.features, 10.0, &[0.7]).unwrap();
        let mut p = b.features;
        p.exposure_time = 0.7;
        assert_eq!(single, o.predict(&[p]).unwrap());
    }

    #[test]
    fn csv_layout() {
        let d = dataset((0..5).map(varied_row).collect());
        let b = BaselineScenario {
            times: vec![0.5, 1.0],
            ..baseline_scenario()
        };
        let s = sweep(
            &FickOracle::default(),
            &b,
            Feature::SilicaFume,
            &d,
            SweepOptions {
                n_levels: 2,
                couple_wb: false,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "feature,level,time_yr,depth_mm,prediction");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].contains(",0.5,10,"));
        assert!(lines[2].contains(",1,10,"));
    }
}
