//! `clingress` command-line front end.
//!
//! [`run`] parses an argument vector, executes one subcommand and returns a
//! [`CommandOutcome`] instead of exiting, so the whole surface is testable
//! in-process. Artifacts are staged as `<name>.partial` and renamed only
//! after every file of the command has been written.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use clingress::data::{load_dataset, ColumnMap, Dataset, Feature, DEFAULT_SEED};
use clingress::estimators::{Family, Hyperparameters, Model, Predictor};
use clingress::metrics::compute_metrics;
use clingress::pipeline::{
    grid_search_cv, run_experiment, summary_table, write_cv_table, write_predictions,
    write_report_json, ExperimentConfig, SearchSpec,
};
use clingress::sensitivity::{
    baseline_scenario, feature_range, sweep, write_sweep_csv, write_sweep_meta, SweepMeta,
    SweepOptions, DEFAULT_LEVELS,
};
use clingress::synth::{generate_dataset, write_synth_meta, SynthConfig};
use clingress::{Error, ErrorClass};
use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable supplying the seed when neither `--seed` nor the
/// config file does.
pub const SEED_ENV: &str = "CLINGRESS_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary for standard output.
    pub stdout: Vec<String>,
    /// Diagnostics for standard error.
    pub stderr: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(
    name = "clingress",
    version,
    about = "Chloride-ingress surrogate models"
)]
struct Cli {
    /// Seed for every random choice (split, folds, initialization, synthesis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration: SynthConfig for `synth`, ExperimentConfig for
    /// `tune` and `report`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// JSON `{"column_map": {external: canonical}}` for renamed headers.
    #[arg(long)]
    column_map: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic Fickian dataset (dataset.csv, synth_meta.json).
    Synth {
        #[arg(long)]
        mixtures: Option<usize>,
        /// Absolute noise std in target units.
        #[arg(long)]
        noise_std: Option<f64>,
    },
    /// Cross-validated grid search per family (tune.json, cv_table.csv).
    Tune {
        #[command(flatten)]
        data: DataArgs,
        /// Family to tune; repeatable. Defaults to the config's families.
        #[arg(long = "family")]
        families: Vec<Family>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Fit one family on a whole dataset (model.json).
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Family,
        /// Hyperparameters as an inline JSON object.
        #[arg(long, conflicts_with = "tuned")]
        params: Option<String>,
        /// Take the best hyperparameters from a `tune.json`.
        #[arg(long)]
        tuned: Option<PathBuf>,
    },
    /// Score a saved model on a dataset (metrics.json).
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// One-at-a-time sweeps around the reference mixture (sweep.csv, sweep_meta.json).
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Feature to sweep; repeatable. Defaults to the ten mixture features.
        #[arg(long = "feature")]
        features: Vec<Feature>,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        /// Recompute w/b when water or a binder is swept.
        #[arg(long)]
        couple_wb: bool,
        /// Extend the time axis to the longest exposure in the dataset.
        #[arg(long)]
        full_horizon: bool,
        /// Allow sweeping a GRU model.
        #[arg(long)]
        include_gru: bool,
    },
    /// Full split/tune/refit/score run (report.json, cv_table.csv, predictions.csv).
    Report {
        /// Dataset CSV; overrides the config's `dataset_path`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        column_map: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Usage => EXIT_USAGE,
            ErrorClass::Data => EXIT_DATA,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Files of one command, written as `.partial` and renamed together.
struct Staged {
    dir: PathBuf,
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::from(io_error(dir, e)))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let final_path = self.dir.join(name);
        let partial = self.dir.join(format!("{name}.partial"));
        fs::write(&partial, bytes).map_err(|e| Failure::from(io_error(&partial, e)))?;
        self.files.push((partial, final_path));
        Ok(())
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut out = Vec::new();
        for (partial, final_path) in self.files {
            fs::rename(&partial, &final_path)
                .map_err(|e| Failure::from(io_error(&final_path, e)))?;
            out.push(final_path);
        }
        Ok(out)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn render<F: FnOnce(&mut Vec<u8>) -> clingress::Result<()>>(f: F) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s.into_bytes()
}

/// `--seed`, then the config file, then `CLINGRESS_SEED`, then 42.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn load(data: &Path, column_map: Option<&Path>) -> CliResult<Dataset> {
    let schema = match column_map {
        Some(p) => ColumnMap::from_json_file(p)?,
        None => ColumnMap::default(),
    };
    Ok(load_dataset(data, &schema)?)
}

fn read_json_file(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(io_error(path, e)))?;
    serde_json::from_str(&text).map_err(|e| Failure::from(Error::from(e)))
}

fn experiment_config(path: Option<&Path>) -> CliResult<Option<ExperimentConfig>> {
    path.map(|p| ExperimentConfig::from_json_file(p).map_err(Failure::from))
        .transpose()
}

struct Done {
    exit_code: i32,
    artifacts: Vec<PathBuf>,
    lines: Vec<String>,
    warnings: Vec<String>,
}

impl Done {
    fn ok(artifacts: Vec<PathBuf>, lines: Vec<String>) -> Self {
        Self {
            exit_code: EXIT_OK,
            artifacts,
            lines,
            warnings: Vec::new(),
        }
    }
}

fn cmd_synth(cli: &Cli, mixtures: Option<usize>, noise_std: Option<f64>) -> CliResult<Done> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_value::<SynthConfig>(read_json_file(p)?)
            .map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    let config_seed = cli.config.as_ref().map(|_| cfg.seed);
    cfg.seed = resolve_seed(cli.seed, config_seed)?;
    if let Some(n) = mixtures {
        cfg.n_mixtures = n;
    }
    if noise_std.is_some() {
        cfg.noise_std = noise_std;
    }
    let s = generate_dataset(&cfg)?;
    let mut staged = Staged::new(&cli.out_dir)?;
    staged.write("dataset.csv", &render(|b| s.dataset.write_csv(b))?)?;
    staged.write(
        "synth_meta.json",
        &render(|b| write_synth_meta(&s.meta, b))?,
    )?;
    let artifacts = staged.commit()?;
    Ok(Done::ok(
        artifacts,
        vec![format!(
            "synthesized {} rows (seed {}, noise std {})",
            s.meta.rows, cfg.seed, s.meta.noise_std
        )],
    ))
}

fn cmd_tune(
    cli: &Cli,
    data: &DataArgs,
    families: &[Family],
    folds: Option<usize>,
) -> CliResult<Done> {
    let cfg = experiment_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, cfg.as_ref().and_then(|c| c.seed))?;
    let families: Vec<Family> = if !families.is_empty() {
        families.to_vec()
    } else if let Some(c) = &cfg {
        c.families.clone()
    } else {
        return Err(usage("tune needs --family or a --config naming families"));
    };
    let base = cfg
        .clone()
        .unwrap_or_else(|| ExperimentConfig::new(families.clone()));
    let k = folds.unwrap_or(base.k_folds);
    let d = load(&data.data, data.column_map.as_deref())?;

    let mut table = Vec::new();
    let mut summary = Map::new();
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    let mut any_ok = false;
    for f in &families {
        let spec = SearchSpec {
            family: *f,
            grid: base.grid_for(*f),
            k,
            seed,
        };
        // bad grids are the caller's mistake and abort the command
        spec.points()?;
        match grid_search_cv(&spec, &d) {
            Ok(r) => {
                any_ok = true;
                lines.push(format!(
                    "{f}: best cv R² {:.4} with {}",
                    r.best_score(),
                    r.best.to_json()
                ));
                summary.insert(
                    f.to_string(),
                    json!({"status": "ok", "best": r.best.to_json(), "cv_mean_r2": r.best_score()}),
                );
                table.extend(r.table);
            }
            Err(e) if e.class() == ErrorClass::Usage => return Err(e.into()),
            Err(e) => {
                warnings.push(format!("{f}: every grid point failed: {e}"));
                summary.insert(
                    f.to_string(),
                    json!({"status": "failed", "error": e.to_string()}),
                );
            }
        }
    }
    let doc = json!({"seed": seed, "k_folds": k, "families": summary});
    let mut staged = Staged::new(&cli.out_dir)?;
    staged.write("tune.json", &json_bytes(&doc))?;
    staged.write("cv_table.csv", &render(|b| write_cv_table(&table, b))?)?;
    let artifacts = staged.commit()?;
    Ok(Done {
        exit_code: if any_ok { EXIT_OK } else { EXIT_NUMERICAL },
        artifacts,
        lines,
        warnings,
    })
}

fn tuned_hyperparameters(path: &Path, family: Family) -> CliResult<Hyperparameters> {
    let doc = read_json_file(path)?;
    let entry = doc
        .get("families")
        .and_then(|f| f.get(family.name()))
        .ok_or_else(|| usage(format!("{} has no entry for {family}", path.display())))?;
    let best = entry
        .get("best")
        .ok_or_else(|| usage(format!("{family} failed during tuning; no best point")))?;
    Ok(Hyperparameters::from_json(family, best)?)
}

fn cmd_train(
    cli: &Cli,
    data: &DataArgs,
    family: Family,
    params: Option<&str>,
    tuned: Option<&Path>,
) -> CliResult<Done> {
    if cli.config.is_some() {
        return Err(usage("train takes --params or --tuned, not --config"));
    }
    let seed = resolve_seed(cli.seed, None)?;
    let hp = match (params, tuned) {
        (Some(p), _) => {
            let v: Value = serde_json::from_str(p).map_err(|e| usage(format!("--params: {e}")))?;
            Hyperparameters::from_json(family, &v)?
        }
        (None, Some(t)) => tuned_hyperparameters(t, family)?,
        (None, None) => Hyperparameters::defaults(family),
    };
    let d = load(&data.data, data.column_map.as_deref())?;
    let model = Model::fit(&hp, &d, seed)?;
    let pred = model.predict(d.features())?;
    let m = compute_metrics(d.targets(), &pred)?;
    let mut staged = Staged::new(&cli.out_dir)?;
    let mut text = model.to_json_string();
    text.push('\n');
    staged.write("model.json", text.as_bytes())?;
    let artifacts = staged.commit()?;
    Ok(Done::ok(
        artifacts,
        vec![format!(
            "trained {family} on {} rows, training R² {:.4}",
            d.len(),
            m.r2
        )],
    ))
}

fn load_model(path: &Path) -> CliResult<Model> {
    Model::load(path).map_err(|e| match e {
        // a model file that does not parse is bad input data, not a usage slip
        Error::InvalidArgument(msg) => Failure {
            code: EXIT_DATA,
            message: format!("{}: {msg}", path.display()),
        },
        other => other.into(),
    })
}

fn cmd_eval(cli: &Cli, data: &DataArgs, model: &Path) -> CliResult<Done> {
    if cli.config.is_some() {
        return Err(usage("eval does not read --config"));
    }
    let m = load_model(model)?;
    let d = load(&data.data, data.column_map.as_deref())?;
    let pred = m.predict(d.features())?;
    let metrics = compute_metrics(d.targets(), &pred)?;
    let doc = json!({"family": m.family(), "metrics": metrics});
    let mut staged = Staged::new(&cli.out_dir)?;
    staged.write("metrics.json", &json_bytes(&doc))?;
    let artifacts = staged.commit()?;
    Ok(Done::ok(
        artifacts,
        vec![format!(
            "{}: R² {:.4}  MAE {:.4}  RMSE {:.4}  MAPE {:.2}% (n = {}, {} zero targets excluded)",
            m.family(),
            metrics.r2,
            metrics.mae,
            metrics.rmse,
            metrics.mape,
            metrics.n,
            metrics.mape_excluded
        )],
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cli: &Cli,
    data: &DataArgs,
    model: &Path,
    features: &[Feature],
    levels: usize,
    couple_wb: bool,
    full_horizon: bool,
    include_gru: bool,
) -> CliResult<Done> {
    if cli.config.is_some() {
        return Err(usage("sweep does not read --config"));
    }
    let m = load_model(model)?;
    if m.family() == Family::Gru && !include_gru {
        return Err(usage(
            "GRU models are excluded from sweeps; pass --include-gru to override",
        ));
    }
    let d = load(&data.data, data.column_map.as_deref())?;
    let mut baseline = baseline_scenario();
    if full_horizon {
        let (_, t_max) = feature_range(&d, Feature::ExposureTime);
        baseline = baseline.with_horizon(t_max)?;
    }
    let features: Vec<Feature> = if features.is_empty() {
        Feature::MIXTURE.to_vec()
    } else {
        features.to_vec()
    };
    let opts = SweepOptions {
        n_levels: levels,
        couple_wb,
    };
    let mut surfaces = Vec::new();
    let mut warnings = Vec::new();
    for f in &features {
        let s = sweep(&m, &baseline, *f, &d, opts)?;
        if s.degenerate {
            warnings.push(format!(
                "{}: observed range is the single value {}",
                f.id(),
                s.range.0
            ));
        }
        surfaces.push(s);
    }
    let meta = SweepMeta::new(&m as &dyn Predictor, &baseline, &surfaces, full_horizon);
    let mut staged = Staged::new(&cli.out_dir)?;
    staged.write("sweep.csv", &render(|b| write_sweep_csv(&surfaces, b))?)?;
    staged.write("sweep_meta.json", &render(|b| write_sweep_meta(&meta, b))?)?;
    let artifacts = staged.commit()?;
    Ok(Done {
        exit_code: EXIT_OK,
        artifacts,
        lines: vec![format!(
            "swept {} feature(s) × {} levels × {} times with {}",
            surfaces.len(),
            levels,
            baseline.times.len(),
            m.family()
        )],
        warnings,
    })
}

fn cmd_report(cli: &Cli, data: Option<&Path>, column_map: Option<&Path>) -> CliResult<Done> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| usage("report needs --config"))?;
    let mut cfg = ExperimentConfig::from_json_file(path)?;
    cfg.seed = Some(resolve_seed(cli.seed, cfg.seed)?);
    let data_path = data
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset_path.clone())
        .ok_or_else(|| usage("no dataset: pass --data or set dataset_path in the config"))?;
    let map_path = column_map
        .map(Path::to_path_buf)
        .or_else(|| cfg.column_map.clone());
    let d = load(&data_path, map_path.as_deref())?;
    let run = run_experiment(&cfg, &d)?;
    let mut staged = Staged::new(&cli.out_dir)?;
    staged.write(
        "report.json",
        &render(|b| write_report_json(&run.report, b))?,
    )?;
    staged.write(
        "cv_table.csv",
        &render(|b| write_cv_table(&run.cv_table, b))?,
    )?;
    staged.write(
        "predictions.csv",
        &render(|b| write_predictions(&run.predictions, b))?,
    )?;
    let artifacts = staged.commit()?;
    let warnings: Vec<String> = run
        .report
        .families
        .iter()
        .filter_map(|f| {
            f.error
                .as_ref()
                .map(|e| format!("{}: failed: {e}", f.family))
        })
        .collect();
    let any_ok = run.report.families.iter().any(|f| f.succeeded());
    Ok(Done {
        exit_code: if any_ok { EXIT_OK } else { EXIT_NUMERICAL },
        artifacts,
        lines: summary_table(&run.report)
            .lines()
            .map(str::to_string)
            .collect(),
        warnings,
    })
}

fn dispatch(cli: &Cli) -> CliResult<Done> {
    match &cli.command {
        Command::Synth {
            mixtures,
            noise_std,
        } => cmd_synth(cli, *mixtures, *noise_std),
        Command::Tune {
            data,
            families,
            folds,
        } => cmd_tune(cli, data, families, *folds),
        Command::Train {
            data,
            family,
            params,
            tuned,
        } => cmd_train(cli, data, *family, params.as_deref(), tuned.as_deref()),
        Command::Eval { data, model } => cmd_eval(cli, data, model),
        Command::Sweep {
            data,
            model,
            features,
            levels,
            couple_wb,
            full_horizon,
            include_gru,
        } => cmd_sweep(
            cli,
            data,
            model,
            features,
            *levels,
            *couple_wb,
            *full_horizon,
            *include_gru,
        ),
        Command::Report { data, column_map } => {
            cmd_report(cli, data.as_deref(), column_map.as_deref())
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    CommandOutcome {
                        exit_code: EXIT_OK,
                        artifacts: Vec::new(),
                        stdout: vec![text],
                        stderr: Vec::new(),
                    }
                }
                _ => CommandOutcome {
                    exit_code: EXIT_USAGE,
                    artifacts: Vec::new(),
                    stdout: Vec::new(),
                    stderr: vec![text],
                },
            };
        }
    };
    match dispatch(&cli) {
        Ok(done) => CommandOutcome {
            exit_code: done.exit_code,
            artifacts: done.artifacts,
            stdout: done.lines,
            stderr: done.warnings,
        },
        Err(f) => CommandOutcome {
            exit_code: f.code,
            artifacts: Vec::new(),
            stdout: Vec::new(),
            stderr: vec![format!("error: {}", f.message)],
        },
    }
}
