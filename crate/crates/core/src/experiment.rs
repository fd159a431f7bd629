//! Experiment configuration and the commands behind the `lsmdyn` binary.
//!
//! Every command is a pure function of the configuration: all randomness
//! comes from the global seed, split per purpose with [`seed::derive`].

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{self, AnalyticFeedforward, FeedbackGains, PlantParams, TrackConfig};
use crate::dataset::{self, CsvSchema, Dataset, Normalizer};
use crate::encoding::{Encoder, EncoderConfig, EncodingMode};
use crate::error::{config, Error, Result};
use crate::pipeline::{self, EncoderSettings, Pipeline, PipelineConfig};
use crate::pso::{self, PsoConfig, SearchResult, SearchSpace};
use crate::readout::{self, Metrics, TrainConfig};
use crate::seed;
use crate::snn::ReservoirConfig;
use crate::trajectory::TrajectorySpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub encoder: EncoderSettings,
    /// Liquid structure. Its `seed` is ignored; the liquid is seeded from
    /// the global seed.
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default)]
    pub readout: TrainConfig,
    #[serde(default)]
    pub baselines: BaselineSettings,
    #[serde(default)]
    pub pso: PsoSettings,
    #[serde(default)]
    pub control: ControlSettings,
    #[serde(default)]
    pub inspect: InspectSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetSource::default(),
            split: SplitConfig::default(),
            plant: PlantParams::default(),
            encoder: EncoderSettings::default(),
            reservoir: ReservoirConfig::default(),
            readout: TrainConfig::default(),
            baselines: BaselineSettings::default(),
            pso: PsoSettings::default(),
            control: ControlSettings::default(),
            inspect: InspectSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

/// Random point-reaching motion on the two-link plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_moves: usize,
    pub move_duration_s: f64,
    pub rate_hz: f64,
    /// Via-points are uniform in `±amplitude` rad per joint.
    pub amplitude: f64,
    /// Torque noise standard deviation (N·m).
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_moves: 70,
            move_duration_s: 1.0,
            rate_hz: 100.0,
            amplitude: 1.0,
            noise_sigma: 0.01,
        }
    }
}

impl SyntheticSpec {
    pub fn trajectory(&self, seed: u64) -> TrajectorySpec {
        TrajectorySpec::random_reaching(
            2,
            self.n_moves,
            self.move_duration_s,
            self.rate_hz,
            self.amplitude,
            seed,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n_moves == 0 {
            return Err(config("synthetic n_moves must be at least 1"));
        }
        if !(self.move_duration_s > 0.0 && self.rate_hz > 0.0 && self.amplitude >= 0.0) {
            return Err(config(
                "synthetic move_duration_s and rate_hz must be positive, amplitude non-negative",
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(config("noise_sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Recorded data. Relative paths are resolved against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    /// JSON [`CsvSchema`]; the bundled layout is inferred from the header
    /// when absent.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_rate() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Leading samples used for training; the rest is the test set.
    pub n_train: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { n_train: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSettings {
    pub ridge_lambda: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { ridge_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoSettings {
    /// One search per entry.
    pub particle_counts: Vec<usize>,
    pub iterations: usize,
    /// Readout epochs per fitness evaluation.
    pub fitness_epochs: usize,
    /// Trailing fraction of the training split scored by the fitness.
    pub validation_fraction: f64,
    pub coefficients: PsoConfig,
}

impl Default for PsoSettings {
    fn default() -> Self {
        Self {
            particle_counts: vec![5, 10, 20],
            iterations: 30,
            fitness_epochs: 30,
            validation_fraction: 0.2,
            coefficients: PsoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSettings {
    pub gains: FeedbackGains,
    pub plant_dt: f64,
    pub reach: ReachSpec,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            gains: FeedbackGains::uniform(2, 50.0, 8.0),
            plant_dt: TrackConfig::default().plant_dt,
            reach: ReachSpec::default(),
        }
    }
}

/// The desired motion for tracking runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachSpec {
    pub n_moves: usize,
    pub move_duration_s: f64,
    pub rate_hz: f64,
    pub amplitude: f64,
}

impl Default for ReachSpec {
    fn default() -> Self {
        Self {
            n_moves: 5,
            move_duration_s: 1.0,
            rate_hz: 100.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InspectSettings {
    /// Leading samples written by `encode-inspect`.
    pub samples: usize,
}

impl Default for InspectSettings {
    fn default() -> Self {
        Self { samples: 20 }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DatasetSource::Csv(src) = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new("."));
            src.path = base.join(&src.path);
            if let Some(s) = &mut src.schema {
                *s = base.join(&*s);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without resolving paths or validating.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(config(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(config("config needs an integer schema_version")),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => s.validate()?,
            DatasetSource::Csv(src) => {
                if !src.path.is_file() {
                    return Err(config(format!("dataset {} does not exist", src.path.display())));
                }
                if let Some(s) = &src.schema {
                    if !s.is_file() {
                        return Err(config(format!("schema {} does not exist", s.display())));
                    }
                }
                if !(src.rate_hz > 0.0 && src.rate_hz.is_finite()) {
                    return Err(config("csv rate_hz must be positive"));
                }
            }
        }
        if self.split.n_train == 0 {
            return Err(config("split.n_train must be at least 1"));
        }
        self.plant.validate()?;
        if self.encoder.window == 0 {
            return Err(config("encoder window must be at least 1 step"));
        }
        if !(self.encoder.theta_scale > 0.0 && self.encoder.theta_scale.is_finite()) {
            return Err(config("encoder theta_scale must be positive"));
        }
        self.reservoir.validate()?;
        self.reservoir.validate_search_bounds()?;
        self.readout.validate()?;
        if !(self.baselines.ridge_lambda >= 0.0 && self.baselines.ridge_lambda.is_finite()) {
            return Err(config("ridge_lambda must be finite and non-negative"));
        }
        let p = &self.pso;
        if p.particle_counts.is_empty() || p.particle_counts.contains(&0) {
            return Err(config("pso.particle_counts needs positive entries"));
        }
        if p.iterations == 0 || p.fitness_epochs == 0 {
            return Err(config("pso iterations and fitness_epochs must be at least 1"));
        }
        if !(p.validation_fraction > 0.0 && p.validation_fraction < 1.0) {
            return Err(config("pso.validation_fraction must lie in (0, 1)"));
        }
        let c = &self.control;
        c.gains.validate()?;
        if c.gains.kp.len() != 2 {
            return Err(config("control gains need one entry per joint of the two-link plant"));
        }
        if !(c.plant_dt > 0.0 && c.plant_dt.is_finite()) {
            return Err(config("control.plant_dt must be positive"));
        }
        let r = &c.reach;
        if r.n_moves == 0 || !(r.move_duration_s > 0.0 && r.rate_hz > 0.0 && r.amplitude >= 0.0) {
            return Err(config("control.reach needs moves, positive duration and rate"));
        }
        Ok(())
    }

    pub fn derived_seed(&self, label: &str) -> u64 {
        seed::derive(self.seed, label)
    }

    /// Pipeline settings, optionally with another encoding.
    pub fn pipeline_config(&self, mode: Option<EncodingMode>) -> PipelineConfig {
        let mut encoder = self.encoder.clone();
        if let Some(m) = mode {
            encoder.mode = m;
        }
        PipelineConfig {
            encoder,
            reservoir: ReservoirConfig {
                seed: self.derived_seed("reservoir"),
                ..self.reservoir.clone()
            },
            readout: self.readout.clone(),
            readout_seed: self.derived_seed("readout"),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => dataset::generate_synthetic(
                &self.plant,
                &s.trajectory(self.derived_seed("trajectory")),
                s.noise_sigma,
                self.derived_seed("noise"),
            ),
            DatasetSource::Csv(src) => {
                let schema = src.schema.as_ref().map(CsvSchema::load).transpose()?;
                dataset::load_csv(&src.path, schema.as_ref(), src.rate_hz)
            }
        }
    }

    pub fn split(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        dataset::split_ordered(ds, self.split.n_train)
    }

    /// Desired motion for tracking, labelled with the exact plant torques.
    pub fn reach_trajectory(&self) -> Result<Dataset> {
        let r = &self.control.reach;
        let spec = TrajectorySpec::random_reaching(
            2,
            r.n_moves,
            r.move_duration_s,
            r.rate_hz,
            r.amplitude,
            self.derived_seed("reach"),
        );
        dataset::generate_synthetic(&self.plant, &spec, 0.0, 0)
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)?;
        Ok(self.output_dir.join(name))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_metrics(path: &Path, dof: usize, rows: &[(&str, &str, &Metrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(Metrics::csv_header(dof))?;
    for (split, predictor, m) in rows {
        w.write_record(m.csv_row(split, predictor))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    rows: usize,
    noise_sigma: f64,
    plant: &'a PlantParams,
    trajectory: &'a TrajectorySpec,
}

/// Writes `dataset.csv` and `manifest.json`.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let DatasetSource::Synthetic(s) = &cfg.dataset else {
        return Err(config("gen needs a synthetic dataset source"));
    };
    let spec = s.trajectory(cfg.derived_seed("trajectory"));
    let ds = dataset::generate_synthetic(&cfg.plant, &spec, s.noise_sigma, cfg.derived_seed("noise"))?;
    let data_path = cfg.out("dataset.csv")?;
    ds.save_csv(&data_path)?;
    let manifest = Manifest {
        seed: cfg.seed,
        rows: ds.len(),
        noise_sigma: s.noise_sigma,
        plant: &cfg.plant,
        trajectory: &spec,
    };
    let manifest_path = cfg.out("manifest.json")?;
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(vec![data_path, manifest_path])
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub mode: EncodingMode,
    pub train: Metrics,
    pub test: Metrics,
    pub model_path: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Trains on the training split and writes `model_<mode>.json`,
/// `loss_<mode>.csv` (test loss as the validation column) and
/// `metrics_<mode>.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, mode: Option<EncodingMode>) -> Result<TrainReport> {
    let ds = cfg.load_dataset()?;
    let (train, test) = cfg.split(&ds)?;
    let pcfg = cfg.pipeline_config(mode);
    let mode = pcfg.encoder.mode;
    let out = Pipeline::train(&pcfg, &train, Some(&test))?;
    let test_metrics = out
        .validation_metrics
        .ok_or_else(|| Error::Data("no test metrics".into()))?;

    let model_path = cfg.out(&format!("model_{mode}.json"))?;
    out.pipeline.save(&model_path)?;
    let loss_path = cfg.out(&format!("loss_{mode}.csv"))?;
    out.history.write_csv(create(&loss_path)?)?;
    let metrics_path = cfg.out(&format!("metrics_{mode}.csv"))?;
    let label = format!("lsm_{mode}");
    write_metrics(
        &metrics_path,
        ds.dof(),
        &[
            ("train", &label, &out.train_metrics),
            ("test", &label, &test_metrics),
        ],
    )?;
    Ok(TrainReport {
        mode,
        train: out.train_metrics,
        test: test_metrics,
        files: vec![model_path.clone(), loss_path, metrics_path],
        model_path,
    })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// `(split, predictor, metrics)` in file order.
    pub rows: Vec<(String, String, Metrics)>,
    pub path: PathBuf,
}

/// Scores a saved model and the mean and ridge baselines on both splits of
/// the configured dataset, or of `dataset` when given, into
/// `metrics_eval.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, model: &Path, dataset: Option<&Path>) -> Result<EvalReport> {
    let pipeline = Pipeline::load(model)?;
    let ds = match dataset {
        Some(p) => {
            let (schema, rate) = match &cfg.dataset {
                DatasetSource::Csv(src) => (
                    src.schema.as_ref().map(CsvSchema::load).transpose()?,
                    src.rate_hz,
                ),
                DatasetSource::Synthetic(s) => (None, s.rate_hz),
            };
            dataset::load_csv(p, schema.as_ref(), rate)?
        }
        None => cfg.load_dataset()?,
    };
    let (train, test) = cfg.split(&ds)?;
    let lambda = cfg.baselines.ridge_lambda;
    let mut rows = Vec::new();
    for (name, part) in [("train", &train), ("test", &test)] {
        rows.push((name.to_string(), "lsm".to_string(), pipeline.evaluate(part)?));
        rows.push((
            name.to_string(),
            "mean".to_string(),
            readout::baseline_mean(&train, part)?,
        ));
        rows.push((
            name.to_string(),
            "ridge".to_string(),
            readout::baseline_ridge(&train, part, lambda)?,
        ));
    }
    let path = cfg.out("metrics_eval.csv")?;
    let borrowed: Vec<(&str, &str, &Metrics)> = rows
        .iter()
        .map(|(s, p, m)| (s.as_str(), p.as_str(), m))
        .collect();
    write_metrics(&path, ds.dof(), &borrowed)?;
    Ok(EvalReport { rows, path })
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    /// One result per configured particle count, in config order.
    pub runs: Vec<(usize, SearchResult)>,
    pub best: ReservoirConfig,
    pub best_fitness: f64,
    pub files: Vec<PathBuf>,
}

/// Searches the liquid structure once per particle count. Fitness is the
/// validation NMSE on the trailing part of the training split. Writes
/// `history_p<count>.csv` and the overall best as `best_reservoir.json`.
pub fn cmd_search(cfg: &ExperimentConfig) -> Result<SearchReport> {
    let ds = cfg.load_dataset()?;
    let (train, _) = cfg.split(&ds)?;
    let n_fit = ((1.0 - cfg.pso.validation_fraction) * train.len() as f64).round() as usize;
    let (fit, val) = dataset::split_ordered(&train, n_fit)?;

    let mut base = cfg.pipeline_config(None);
    base.readout.epochs = cfg.pso.fitness_epochs;
    let space = SearchSpace::reservoir_default();
    let fitness = |x: &[f64]| match base.reservoir.with_search_vector(x) {
        Ok(reservoir) => {
            let pc = PipelineConfig {
                reservoir,
                ..base.clone()
            };
            pipeline::validation_nmse(&pc, &fit, &val)
        }
        Err(_) => f64::INFINITY,
    };

    let mut runs = Vec::new();
    let mut files = Vec::new();
    for &count in &cfg.pso.particle_counts {
        let result = pso::search(
            &space,
            count,
            cfg.pso.iterations,
            seed::derive_indexed(cfg.seed, "pso", count as u64),
            cfg.pso.coefficients,
            fitness,
        )?;
        let path = cfg.out(&format!("history_p{count}.csv"))?;
        result.write_csv(&space, create(&path)?)?;
        files.push(path);
        log::info!("pso with {count} particles: best fitness {}", result.best_fitness);
        runs.push((count, result));
    }
    let (_, winner) = runs
        .iter()
        .min_by(|a, b| a.1.best_fitness.total_cmp(&b.1.best_fitness))
        .expect("at least one particle count");
    let best_fitness = winner.best_fitness;
    if !best_fitness.is_finite() {
        return Err(Error::Numerical("every fitness evaluation failed".into()));
    }
    let best = base.reservoir.with_search_vector(&winner.best_position)?;
    let path = cfg.out("best_reservoir.json")?;
    std::fs::write(&path, serde_json::to_string_pretty(&best)?)?;
    files.push(path);
    Ok(SearchReport {
        runs,
        best,
        best_fitness,
        files,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedforwardSource<'a> {
    /// A trained model artifact.
    Model(&'a Path),
    /// The plant's exact inverse dynamics.
    Oracle,
    /// Feedback only.
    None,
}

impl FeedforwardSource<'_> {
    fn label(&self) -> &'static str {
        match self {
            Self::Model(_) => "learned",
            Self::Oracle => "oracle",
            Self::None => "pd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackReport {
    pub log: control::TrackingLog,
    pub rms_position_error: f64,
    pub path: PathBuf,
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    feedforward: &'static str,
    steps: usize,
    rms_position_error: f64,
}

/// Tracks the configured reach on the plant and writes `track_<kind>.csv`
/// and `track_<kind>.json`.
pub fn cmd_track(cfg: &ExperimentConfig, source: FeedforwardSource<'_>) -> Result<TrackReport> {
    let desired = cfg.reach_trajectory()?;
    let tc = TrackConfig {
        plant_dt: cfg.control.plant_dt,
    };
    let gains = &cfg.control.gains;
    let log = match source {
        FeedforwardSource::Model(p) => {
            let pipeline = Pipeline::load(p)?;
            let mut ff = pipeline.predictor()?;
            control::track(&desired, Some(&mut ff), gains, &cfg.plant, &tc)?
        }
        FeedforwardSource::Oracle => {
            let mut ff = AnalyticFeedforward(cfg.plant);
            control::track(&desired, Some(&mut ff), gains, &cfg.plant, &tc)?
        }
        FeedforwardSource::None => control::track(&desired, None, gains, &cfg.plant, &tc)?,
    };
    let kind = source.label();
    let path = cfg.out(&format!("track_{kind}.csv"))?;
    log.write_csv(create(&path)?)?;
    let rms = log.rms_position_error();
    let summary = TrackSummary {
        feedforward: kind,
        steps: log.len(),
        rms_position_error: rms,
    };
    std::fs::write(
        cfg.out(&format!("track_{kind}.json"))?,
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(TrackReport {
        log,
        rms_position_error: rms,
        path,
    })
}

/// Writes the spike schedules of the first `inspect.samples` samples as
/// `encode_<mode>.csv` (`sample, step, ch0..`). The encoder is fitted on the
/// training split exactly as in training.
pub fn cmd_encode_inspect(cfg: &ExperimentConfig, mode: Option<EncodingMode>) -> Result<PathBuf> {
    let ds = cfg.load_dataset()?;
    let (train, _) = cfg.split(&ds)?;
    let settings = cfg.pipeline_config(mode).encoder;
    let norm = Normalizer::fit(&train)?;
    let states: Vec<Vec<f64>> = train.states().iter().map(|x| norm.state(x)).collect();
    let enc_cfg = EncoderConfig::fit(settings.mode, settings.window, settings.theta_scale, &states)?;
    let channels = enc_cfg.channels();
    let mut encoder = Encoder::new(enc_cfg)?;

    let path = cfg.out(&format!("encode_{}.csv", settings.mode))?;
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["sample".to_string(), "step".to_string()];
    header.extend((0..channels).map(|c| format!("ch{c}")));
    w.write_record(&header)?;
    for (i, s) in ds.samples().iter().take(cfg.inspect.samples).enumerate() {
        encoder
            .encode(&norm.state(&s.state()))?
            .write_csv_rows(&mut w, i)?;
    }
    w.flush()?;
    Ok(path)
}
