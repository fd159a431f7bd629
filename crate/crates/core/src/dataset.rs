//! Trajectory datasets: CSV ingestion, synthetic generation, normalization
//! and temporal splits.
//!
//! A dataset is one ordered trajectory. Sample order is never changed: the
//! reservoir reads consecutive samples as a time series.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{inverse_dynamics, pair, PlantParams};
use crate::error::{config, Error, Result};
use crate::seed;
use crate::trajectory::TrajectorySpec;

/// One time-stamped `(q, q̇, q̈) → τ` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
    pub tau: Vec<f64>,
}

impl TrajectorySample {
    pub fn new(t: f64, q: Vec<f64>, dq: Vec<f64>, ddq: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        let s = Self { t, q, dq, ddq, tau };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if n == 0 || self.dq.len() != n || self.ddq.len() != n || self.tau.len() != n {
            return Err(Error::Data(format!(
                "sample at t = {} has inconsistent vector lengths",
                self.t
            )));
        }
        let finite = self.t.is_finite()
            && self
                .q
                .iter()
                .chain(&self.dq)
                .chain(&self.ddq)
                .chain(&self.tau)
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data(format!(
                "sample at t = {} has non-finite entries",
                self.t
            )));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// The regression input `[q, q̇, q̈]` of length 3N.
    pub fn state(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.dof());
        x.extend_from_slice(&self.q);
        x.extend_from_slice(&self.dq);
        x.extend_from_slice(&self.ddq);
        x
    }

    fn from_state(t: f64, state: &[f64], tau: Vec<f64>) -> Self {
        let n = tau.len();
        Self {
            t,
            q: state[..n].to_vec(),
            dq: state[n..2 * n].to_vec(),
            ddq: state[2 * n..3 * n].to_vec(),
            tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    rate_hz: f64,
    dof: usize,
    samples: Vec<TrajectorySample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, rate_hz: f64, samples: Vec<TrajectorySample>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(config(format!("rate_hz must be positive, got {rate_hz}")));
        }
        let Some(first) = samples.first() else {
            return Err(Error::Data("dataset has no samples".into()));
        };
        let dof = first.dof();
        for (i, s) in samples.iter().enumerate() {
            s.validate()?;
            if s.dof() != dof {
                return Err(Error::Data(format!(
                    "sample {i} has {} joints, expected {dof}",
                    s.dof()
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::Data(format!(
                    "timestamps must be strictly increasing (sample {i})"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            rate_hz,
            dof,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(TrajectorySample::state).collect()
    }

    pub fn torques(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.tau.clone()).collect()
    }

    /// Writes the bundled CSV layout: `q*, dq*, ddq*, tau*, t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let schema = CsvSchema::bundled(self.dof);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = schema.value_columns().map(String::as_str).collect();
        header.push("t");
        w.write_record(&header)?;
        for s in &self.samples {
            let row: Vec<String> = s
                .state()
                .iter()
                .chain(&s.tau)
                .chain(std::iter::once(&s.t))
                .map(f64::to_string)
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Column mapping for CSV ingestion.
///
/// Stored as JSON for external files whose headers differ from the bundled
/// `q0.., dq0.., ddq0.., tau0..` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub q: Vec<String>,
    pub dq: Vec<String>,
    pub ddq: Vec<String>,
    pub tau: Vec<String>,
    /// Timestamp column in seconds; when absent, `t = i / rate_hz`.
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_rate() -> f64 {
    100.0
}

impl CsvSchema {
    pub fn bundled(dof: usize) -> Self {
        let cols = |p: &str| (0..dof).map(|j| format!("{p}{j}")).collect();
        Self {
            q: cols("q"),
            dq: cols("dq"),
            ddq: cols("ddq"),
            tau: cols("tau"),
            time: None,
            rate_hz: default_rate(),
        }
    }

    /// Bundled layout inferred from a header: counts the `q<j>` columns and
    /// uses a `t` column when present.
    pub fn infer(header: &[&str], rate_hz: f64) -> Result<Self> {
        let dof = (0..)
            .take_while(|j| header.contains(&format!("q{j}").as_str()))
            .count();
        if dof == 0 {
            return Err(Error::MissingColumn("q0".into()));
        }
        Ok(Self {
            time: header.contains(&"t").then(|| "t".to_string()),
            rate_hz,
            ..Self::bundled(dof)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let schema: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        if n == 0 || self.dq.len() != n || self.ddq.len() != n || self.tau.len() != n {
            return Err(config(
                "schema needs the same non-zero number of q, dq, ddq and tau columns",
            ));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(config("schema rate_hz must be positive"));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    fn value_columns(&self) -> impl Iterator<Item = &String> {
        self.q.iter().chain(&self.dq).chain(&self.ddq).chain(&self.tau)
    }
}

/// Reads a dataset in file order.
pub fn read_csv<R: Read>(input: R, schema: &CsvSchema, name: &str) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let lookup = |c: &String| {
        index
            .get(c.as_str())
            .copied()
            .ok_or_else(|| Error::MissingColumn(c.clone()))
    };
    let value_cols = schema
        .value_columns()
        .map(|c| lookup(c).map(|i| (c.as_str(), i)))
        .collect::<Result<Vec<_>>>()?;
    let time_col = schema.time.as_ref().map(&lookup).transpose()?;

    let n = schema.dof();
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Format {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let parse = |name: &str, idx: usize| {
            let cell = &record[idx];
            cell.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                value: cell.to_string(),
            })
        };
        let values = value_cols
            .iter()
            .map(|&(c, idx)| parse(c, idx))
            .collect::<Result<Vec<_>>>()?;
        let t = match (time_col, &schema.time) {
            (Some(idx), Some(c)) => parse(c, idx)?,
            _ => i as f64 / schema.rate_hz,
        };
        samples.push(TrajectorySample::new(
            t,
            values[..n].to_vec(),
            values[n..2 * n].to_vec(),
            values[2 * n..3 * n].to_vec(),
            values[3 * n..].to_vec(),
        )?);
    }
    Dataset::new(name, schema.rate_hz, samples)
}

/// Loads a CSV dataset. Without a schema the bundled layout is inferred from
/// the header and `rate_hz` is used for missing timestamps.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&CsvSchema>, rate_hz: f64) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(path)?;
            let header = rdr.headers()?.clone();
            CsvSchema::infer(&header.iter().collect::<Vec<_>>(), rate_hz)?
        }
    };
    read_csv(std::fs::File::open(path)?, &schema, &name)
}

/// First `n_train` samples for training, the rest for testing.
pub fn split_ordered(ds: &Dataset, n_train: usize) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= ds.len() {
        return Err(Error::Bounds(format!(
            "n_train must be in 1..{}, got {n_train}",
            ds.len()
        )));
    }
    let part = |suffix: &str, samples: &[TrajectorySample]| Dataset {
        name: format!("{}-{suffix}", ds.name),
        rate_hz: ds.rate_hz,
        dof: ds.dof,
        samples: samples.to_vec(),
    };
    Ok((
        part("train", &ds.samples[..n_train]),
        part("test", &ds.samples[n_train..]),
    ))
}

/// Per-dimension standardization of states (3N) and torques (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub tau_mean: Vec<f64>,
    pub tau_std: Vec<f64>,
}

/// Population mean and standard deviation; zero spread maps to 1.
pub(crate) fn mean_std(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Normalizer {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Data("cannot fit a normalizer on an empty dataset".into()));
        }
        let (state_mean, state_std) = mean_std(&ds.states());
        let (tau_mean, tau_std) = mean_std(&ds.torques());
        Ok(Self {
            state_mean,
            state_std,
            tau_mean,
            tau_std,
        })
    }

    pub fn dof(&self) -> usize {
        self.tau_mean.len()
    }

    pub fn state(&self, x: &[f64]) -> Vec<f64> {
        standardize(x, &self.state_mean, &self.state_std)
    }

    pub fn state_inverse(&self, z: &[f64]) -> Vec<f64> {
        unstandardize(z, &self.state_mean, &self.state_std)
    }

    pub fn tau(&self, tau: &[f64]) -> Vec<f64> {
        standardize(tau, &self.tau_mean, &self.tau_std)
    }

    pub fn tau_inverse(&self, z: &[f64]) -> Vec<f64> {
        unstandardize(z, &self.tau_mean, &self.tau_std)
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if ds.dof() != self.dof() {
            return Err(crate::error::shape(format!(
                "normalizer fitted for {} joints, dataset has {}",
                self.dof(),
                ds.dof()
            )));
        }
        Ok(())
    }

    /// Normalized copy of a dataset (timestamps untouched).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        self.map(ds, |x| self.state(x), |t| self.tau(t))
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        self.map(ds, |x| self.state_inverse(x), |t| self.tau_inverse(t))
    }

    fn map(
        &self,
        ds: &Dataset,
        fs: impl Fn(&[f64]) -> Vec<f64>,
        ft: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Dataset> {
        let samples = ds
            .samples
            .iter()
            .map(|s| TrajectorySample::from_state(s.t, &fs(&s.state()), ft(&s.tau)))
            .collect();
        Ok(Dataset {
            name: ds.name.clone(),
            rate_hz: ds.rate_hz,
            dof: ds.dof,
            samples,
        })
    }
}

fn standardize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

fn unstandardize(z: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    z.iter().zip(mean).zip(std).map(|((v, m), s)| v * s + m).collect()
}

/// Labels a minimum-jerk motion with the plant's inverse dynamics plus
/// Gaussian torque noise.
pub fn generate_synthetic(
    plant: &PlantParams,
    spec: &TrajectorySpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    plant.validate()?;
    if spec.dof() != 2 {
        return Err(config(format!(
            "synthetic data comes from the two-link plant; via-points have {} joints",
            spec.dof()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(config("noise_sigma must be finite and non-negative"));
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| config(e.to_string()))?;
    let samples = spec
        .sample()?
        .into_iter()
        .map(|(t, js)| {
            let tau = inverse_dynamics(pair(&js.q)?, pair(&js.dq)?, pair(&js.ddq)?, plant);
            let tau = if noise_sigma > 0.0 {
                tau.iter().map(|v| v + noise.sample(&mut rng)).collect()
            } else {
                tau.to_vec()
            };
            TrajectorySample::new(t, js.q, js.dq, js.ddq, tau)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new("synthetic", spec.rate_hz, samples)
}
