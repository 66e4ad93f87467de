//! Fickian reference profile and the synthetic dataset built on it.
//!
//! `C(x, t) = C_s · erfc(x / (2√(D t)))` for a half-space held at surface
//! concentration `C_s`. The mixture → diffusivity map is synthetic: its
//! constants are chosen so that supplementary binders slow ingress and
//! coarse aggregate speeds it up, which gives sensitivity sweeps a known
//! ground truth.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::estimators::Predictor;
use crate::numerics::erfc;

pub const SECONDS_PER_YEAR: f64 = 3.155_76e7;
pub const METRES_PER_MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FickParams {
    /// g/l
    pub surface: f64,
    /// m²/s
    pub diffusivity: f64,
    /// m
    pub depth: f64,
    /// s
    pub time: f64,
}

pub fn fick_concentration(p: FickParams) -> Result<f64> {
    if !(p.time > 0.0) {
        return Err(Error::arg(format!(
            "exposure time must be > 0, got {}",
            p.time
        )));
    }
    if !(p.diffusivity > 0.0) {
        return Err(Error::arg(format!(
            "diffusivity must be > 0, got {}",
            p.diffusivity
        )));
    }
    if !(p.surface >= 0.0 && p.depth >= 0.0) {
        return Err(Error::arg("surface concentration and depth must be >= 0"));
    }
    Ok(p.surface * erfc(p.depth / (2.0 * (p.diffusivity * p.time).sqrt())))
}

/// Constants of the synthetic diffusivity map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusivityMap {
    /// m²/s at the neutral mixture
    pub d0: f64,
    pub k_w: f64,
    pub k_s: f64,
    pub k_c: f64,
    /// K
    pub activation: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DiffusivityMap {
    fn default() -> Self {
        Self {
            d0: 1e-11,
            k_w: 5.0,
            k_s: 2.0,
            k_c: 0.3,
            activation: 4000.0,
            d_min: 1e-14,
            d_max: 1e-9,
        }
    }
}

impl DiffusivityMap {
    /// Effective diffusivity in m²/s for one mixture and exposure
    /// temperature. Neutral point: w/b 0.40, no supplementary binder,
    /// 23 °C, 1000 kg/m³ coarse aggregate.
    pub fn diffusivity(&self, f: &FeatureVector) -> Result<f64> {
        let binder = f.binder();
        if !(binder > 0.0) {
            return Err(Error::arg("binder content must be > 0"));
        }
        let scm = (f.fly_ash + 3.0 * f.silica_fume + 0.7 * f.ggbs) / binder;
        let d = self.d0
            * (self.k_w * (f.wb_ratio - 0.40)).exp()
            * (-self.k_s * scm).exp()
            * (-self.activation * (1.0 / (f.temperature + 273.15) - 1.0 / 296.15)).exp()
            * (1.0 + self.k_c * (f.coarse_agg - 1000.0) / 1000.0);
        Ok(d.clamp(self.d_min, self.d_max))
    }
}

pub fn effective_diffusivity(f: &FeatureVector) -> Result<f64> {
    DiffusivityMap::default().diffusivity(f)
}

/// Closed-form chloride at a row's own depth and exposure time.
pub fn profile_at(map: &DiffusivityMap, f: &FeatureVector) -> Result<f64> {
    fick_concentration(FickParams {
        surface: f.surface_chloride,
        diffusivity: map.diffusivity(f)?,
        depth: f.depth * METRES_PER_MM,
        time: f.exposure_time * SECONDS_PER_YEAR,
    })
}

/// The closed form used as a model, for trend checks against sweeps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FickOracle {
    pub map: DiffusivityMap,
}

impl Predictor for FickOracle {
    fn predict(&self, rows: &[FeatureVector]) -> Result<Vec<f64>> {
        rows.iter().map(|r| profile_at(&self.map, r)).collect()
    }

    fn tag(&self) -> String {
        "FICK".into()
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(&self.map).expect("map serializes")
    }
}

/// Uniform sampling bounds for one mixture column, kg/m³ unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub column: &'static str,
    pub lo: f64,
    pub hi: f64,
}

/// Sampling bounds in draw order. w/b is derived, never drawn.
pub const MIXTURE_RANGES: [Range; 11] = [
    Range {
        column: "surface_chloride_g_l",
        lo: 5.0,
        hi: 35.0,
    },
    Range {
        column: "temperature_c",
        lo: 5.0,
        hi: 30.0,
    },
    Range {
        column: "water_kg_m3",
        lo: 140.0,
        hi: 220.0,
    },
    Range {
        column: "srpc_kg_m3",
        lo: 0.0,
        hi: 100.0,
    },
    Range {
        column: "opc_kg_m3",
        lo: 200.0,
        hi: 500.0,
    },
    Range {
        column: "fly_ash_kg_m3",
        lo: 0.0,
        hi: 150.0,
    },
    Range {
        column: "silica_fume_kg_m3",
        lo: 0.0,
        hi: 50.0,
    },
    Range {
        column: "ggbs_kg_m3",
        lo: 0.0,
        hi: 300.0,
    },
    Range {
        column: "superplasticizer_kg_m3",
        lo: 0.0,
        hi: 10.0,
    },
    Range {
        column: "fine_agg_kg_m3",
        lo: 600.0,
        hi: 900.0,
    },
    Range {
        column: "coarse_agg_kg_m3",
        lo: 800.0,
        hi: 1200.0,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_mixtures: usize,
    pub depths_mm: Vec<f64>,
    pub times_yr: Vec<f64>,
    /// Absolute noise std in target units; `None` uses `noise_fraction`.
    pub noise_std: Option<f64>,
    /// Noise std as a fraction of the mean noise-free target.
    pub noise_fraction: f64,
    pub seed: u64,
    pub diffusivity: DiffusivityMap,
}

impl Default for SynthConfig {
    /// 50 mixtures × 8 depths × 5 times = 2000 rows at 5 % noise.
    fn default() -> Self {
        Self {
            n_mixtures: 50,
            depths_mm: vec![2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0],
            times_yr: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            noise_std: None,
            noise_fraction: 0.05,
            seed: DEFAULT_SEED,
            diffusivity: DiffusivityMap::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_mixtures == 0 || self.depths_mm.is_empty() || self.times_yr.is_empty() {
            return Err(Error::arg(
                "synthetic grid needs mixtures, depths and times",
            ));
        }
        if self.depths_mm.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::arg("depths must be finite and >= 0"));
        }
        if self.times_yr.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::arg("times must be finite and > 0"));
        }
        let noise_ok = |v: f64| v.is_finite() && v >= 0.0;
        if !noise_ok(self.noise_fraction) || !self.noise_std.is_none_or(noise_ok) {
            return Err(Error::arg("noise must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    /// Noise std actually applied, in target units.
    pub noise_std: f64,
    pub rows: usize,
    pub mixture_ranges: Vec<Range>,
    pub seconds_per_year: f64,
    pub metres_per_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub dataset: Dataset,
    pub meta: SynthMeta,
}

fn draw_mixture(rng: &mut ChaCha8Rng) -> FeatureVector {
    let mut v = [0.0; 11];
    for (slot, r) in v.iter_mut().zip(&MIXTURE_RANGES) {
        *slot = rng.random_range(r.lo..=r.hi);
    }
    let [cs, temperature, water, srpc, opc, fly_ash, silica_fume, ggbs, sp, fine, coarse] = v;
    let mut f = FeatureVector {
        surface_chloride: cs,
        exposure_time: 1.0,
        temperature,
        depth: 0.0,
        water,
        srpc,
        opc,
        wb_ratio: 0.0,
        fly_ash,
        silica_fume,
        ggbs,
        superplasticizer: sp,
        fine_agg: fine,
        coarse_agg: coarse,
    };
    f.wb_ratio = water / f.binder();
    f
}

/// Rows are ordered by mixture, then depth, then time. Noise is drawn after
/// all mixtures, in row order, from the same seeded stream.
pub fn generate_dataset(c: &SynthConfig) -> Result<Synthesized> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mixtures: Vec<FeatureVector> = (0..c.n_mixtures).map(|_| draw_mixture(&mut rng)).collect();
    let mut rows = Vec::with_capacity(c.n_mixtures * c.depths_mm.len() * c.times_yr.len());
    let mut clean = Vec::with_capacity(rows.capacity());
    for m in &mixtures {
        for &depth in &c.depths_mm {
            for &t in &c.times_yr {
                let mut f = *m;
                f.depth = depth;
                f.exposure_time = t;
                clean.push(profile_at(&c.diffusivity, &f)?);
                rows.push(f);
            }
        }
    }
    let noise_std = c
        .noise_std
        .unwrap_or_else(|| c.noise_fraction * clean.iter().sum::<f64>() / clean.len() as f64);
    let targets = if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::arg(e.to_string()))?;
        clean.iter().map(|y| y + normal.sample(&mut rng)).collect()
    } else {
        clean
    };
    let dataset = Dataset::new(rows, targets)?;
    Ok(Synthesized {
        meta: SynthMeta {
            config: c.clone(),
            noise_std,
            rows: dataset.len(),
            mixture_ranges: MIXTURE_RANGES.to_vec(),
            seconds_per_year: SECONDS_PER_YEAR,
            metres_per_mm: METRES_PER_MM,
        },
        dataset,
    })
}

pub fn write_synth_meta<W: Write>(meta: &SynthMeta, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, meta)?;
    w.write_all(b"\n").map_err(|e| Error::io("synth meta", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{GprConfig, Hyperparameters, Model};
    use crate::metrics::compute_metrics;

    fn neutral() -> FeatureVector {
        FeatureVector {
            surface_chloride: 19.6,
            exposure_time: 1.0,
            temperature: 23.0,
            depth: 10.0,
            water: 160.0,
            srpc: 0.0,
            opc: 400.0,
            wb_ratio: 0.40,
            fly_ash: 0.0,
            silica_fume: 0.0,
            ggbs: 0.0,
            superplasticizer: 2.0,
            fine_agg: 700.0,
            coarse_agg: 1000.0,
        }
    }

    fn at(x: f64, t: f64) -> f64 {
        fick_concentration(FickParams {
            surface: 19.6,
            diffusivity: 1e-11,
            depth: x,
            time: t,
        })
        .unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(at(0.0, 1e7), 19.6);
        let t = 2.5e7;
        let x = 2.0 * (1e-11f64 * t).sqrt();
        assert!((at(x, t) - 19.6 * 0.157_299_207_050_285_13).abs() < 1e-12);
        assert!((at(x, t) - 3.0831).abs() < 1e-4);
        let far = |x: f64| {
            fick_concentration(FickParams {
                surface: 19.6,
                diffusivity: 1e-9,
                depth: x,
                time: 1e18,
            })
            .unwrap()
        };
        assert!((far(1e-6) - 19.6).abs() < 1e-9);
        // erf(z) <= 2z/√π bounds the approach at any depth
        let z = 0.01 / (2.0 * (1e-9f64 * 1e18).sqrt());
        assert!((far(0.01) - 19.6).abs() <= 19.6 * 2.0 * z / std::f64::consts::PI.sqrt());
        assert!(fick_concentration(FickParams {
            surface: 1.0,
            diffusivity: 1e-11,
            depth: 0.0,
            time: 0.0
        })
        .is_err());
    }

    #[test]
    fn monotone_in_depth_and_time() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 1e-3).collect();
        let ts: Vec<f64> = (1..30).map(|i| i as f64 * 5e6).collect();
        for &t in &ts {
            for w in xs.windows(2) {
                assert!(at(w[1], t) < at(w[0], t) + 1e-9);
            }
        }
        for &x in &xs[1..] {
            for w in ts.windows(2) {
                assert!(at(x, w[1]) > at(x, w[0]) - 1e-9);
            }
        }
        for &x in &xs {
            let lo = at(x, 3e7);
            let hi = fick_concentration(FickParams {
                surface: 19.6,
                diffusivity: 2e-11,
                depth: x,
                time: 3e7,
            })
            .unwrap();
            assert!(hi >= lo);
        }
    }

    #[test]
    fn neutral_mixture_has_reference_diffusivity() {
        assert_eq!(effective_diffusivity(&neutral()).unwrap(), 1e-11);
    }

    #[test]
    fn baseline_diffusivity() {
        let mut f = neutral();
        f.water = 184.0;
        f.opc = 460.0;
        f.fly_ash = 100.0;
        f.wb_ratio = 184.0 / 560.0;
        f.temperature = 9.0;
        f.coarse_agg = 1050.0;
        // spreadsheet-style recomputation, one factor at a time
        let water_factor = (5.0f64 * (0.328_571_428_571_428_6 - 0.4)).exp();
        let scm_factor = (-2.0f64 * 100.0 / 560.0).exp();
        let temp_factor = (-4000.0f64 * (1.0 / 282.15 - 1.0 / 296.15)).exp();
        let coarse_factor = 1.015;
        let expected = 1e-11 * water_factor * scm_factor * temp_factor * coarse_factor;
        let d = effective_diffusivity(&f).unwrap();
        assert!((d - expected).abs() <= 1e-12 * expected);
        assert!((d - 2.542_125_715_414_305e-12).abs() < 1e-24, "{d}");
    }

    #[test]
    fn silica_fume_lowers_and_coarse_aggregate_raises_diffusivity() {
        let mut prev = f64::INFINITY;
        for sf in [0.0, 10.0, 20.0, 40.0] {
            let mut f = neutral();
            f.silica_fume = sf;
            let d = effective_diffusivity(&f).unwrap();
            assert!(d < prev);
            prev = d;
        }
        let mut f = neutral();
        f.coarse_agg = 1100.0;
        assert!(effective_diffusivity(&f).unwrap() > 1e-11);
        let mut f = neutral();
        f.opc = 0.0;
        assert!(effective_diffusivity(&f).is_err());
    }

    #[test]
    fn grid_product_and_determinism() {
        let c = SynthConfig {
            n_mixtures: 10,
            depths_mm: vec![1.0, 5.0, 10.0, 20.0, 30.0],
            times_yr: vec![0.5, 1.0, 2.0, 3.0],
            ..Default::default()
        };
        let a = generate_dataset(&c).unwrap();
        assert_eq!(a.dataset.len(), 200);
        let b = generate_dataset(&c).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.dataset.write_csv(&mut ba).unwrap();
        b.dataset.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        for r in a.dataset.features() {
            assert!(r.validate().is_ok());
            assert_eq!(r.wb_ratio, r.water / r.binder());
        }
        assert_eq!(
            generate_dataset(&SynthConfig::default())
                .unwrap()
                .dataset
                .len(),
            2000
        );
    }

    #[test]
    fn noiseless_data_is_learnable() {
        let c = SynthConfig {
            n_mixtures: 12,
            noise_std: Some(0.0),
            ..Default::default()
        };
        let s = generate_dataset(&c).unwrap();
        let hp = Hyperparameters::Gpr(GprConfig {
            lengthscale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-6,
        });
        let m = Model::fit(&hp, &s.dataset, 0).unwrap();
        let pred = m.predict(s.dataset.features()).unwrap();
        let r2 = compute_metrics(s.dataset.targets(), &pred).unwrap().r2;
        assert!(r2 >= 0.999, "{r2}");
        let oracle = FickOracle::default().predict(s.dataset.features()).unwrap();
        assert_eq!(oracle, s.dataset.targets());
    }
}
