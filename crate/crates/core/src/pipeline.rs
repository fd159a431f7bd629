//! The trained model: normalizer, encoder, liquid and readout as one artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::Feedforward;
use crate::dataset::{Dataset, Normalizer};
use crate::encoding::{Encoder, EncoderConfig, EncodingMode};
use crate::error::{config, shape, Error, Result};
use crate::readout::{self, LossHistory, Metrics, Mlp, TrainConfig};
use crate::snn::{Reservoir, ReservoirConfig};

pub const ARTIFACT_FORMAT: &str = "liquid-dynamics-pipeline";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSettings {
    pub mode: EncodingMode,
    pub window: usize,
    /// Delta quantum in standard deviations of the per-sample change; see
    /// [`EncoderConfig::fit`].
    pub theta_scale: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            mode: EncodingMode::Delta,
            window: 10,
            theta_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub encoder: EncoderSettings,
    pub reservoir: ReservoirConfig,
    pub readout: TrainConfig,
    pub readout_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    format: String,
    version: u32,
    normalizer: Normalizer,
    encoder: EncoderConfig,
    reservoir: Reservoir,
    readout: Mlp,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pipeline: Pipeline,
    pub history: LossHistory,
    /// Physical-unit metrics of the trained model on its training set.
    pub train_metrics: Metrics,
    pub validation_metrics: Option<Metrics>,
}

/// Readout inputs and normalized targets for one trajectory.
#[derive(Debug, Clone)]
pub struct Design {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Pipeline {
    pub fn train(cfg: &PipelineConfig, train: &Dataset, validation: Option<&Dataset>) -> Result<TrainOutcome> {
        cfg.readout.validate()?;
        if let Some(v) = validation {
            if v.dof() != train.dof() {
                return Err(shape("validation set has a different joint count"));
            }
        }
        let normalizer = Normalizer::fit(train)?;
        let states: Vec<Vec<f64>> = train.states().iter().map(|x| normalizer.state(x)).collect();
        let encoder = EncoderConfig::fit(
            cfg.encoder.mode,
            cfg.encoder.window,
            cfg.encoder.theta_scale,
            &states,
        )?;
        let reservoir = Reservoir::build(&cfg.reservoir, encoder.channels())?;
        let readout = Mlp::new(
            reservoir.len() + train.dof(),
            cfg.readout.hidden,
            train.dof(),
            cfg.readout_seed,
        );
        let mut pipeline = Self {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            normalizer,
            encoder,
            reservoir,
            readout,
        };

        let design = pipeline.design(train)?;
        let val_design = validation.map(|v| pipeline.design(v)).transpose()?;
        let history = readout::train(
            &mut pipeline.readout,
            &design.inputs,
            &design.targets,
            val_design
                .as_ref()
                .map(|d| (d.inputs.as_slice(), d.targets.as_slice())),
            &cfg.readout,
            cfg.readout_seed,
        )?;
        let train_metrics = pipeline.metrics_from_design(&design, train)?;
        let validation_metrics = match (&val_design, validation) {
            (Some(d), Some(v)) => Some(pipeline.metrics_from_design(d, v)?),
            _ => None,
        };
        Ok(TrainOutcome {
            pipeline,
            history,
            train_metrics,
            validation_metrics,
        })
    }

    pub fn dof(&self) -> usize {
        self.normalizer.dof()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn readout(&self) -> &Mlp {
        &self.readout
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if ds.dof() != self.dof() {
            return Err(shape(format!(
                "model has {} joints, dataset has {}",
                self.dof(),
                ds.dof()
            )));
        }
        Ok(())
    }

    /// Streams a trajectory through a fresh copy of the liquid and returns
    /// the per-sample spike-count features.
    pub fn features(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.check(ds)?;
        let mut encoder = Encoder::new(self.encoder.clone())?;
        let mut reservoir = self.reservoir.clone();
        reservoir.reset_state();
        ds.samples()
            .iter()
            .map(|s| {
                let sched = encoder.encode(&self.normalizer.state(&s.state()))?;
                reservoir.simulate_window(&sched)
            })
            .collect()
    }

    /// Readout inputs `[features, prev_tau]` with the measured torque of the
    /// previous sample (zero torque before the first), and normalized targets.
    pub fn design(&self, ds: &Dataset) -> Result<Design> {
        let features = self.features(ds)?;
        let mut prev = self.normalizer.tau(&vec![0.0; self.dof()]);
        let mut inputs = Vec::with_capacity(ds.len());
        let mut targets = Vec::with_capacity(ds.len());
        for (f, s) in features.into_iter().zip(ds.samples()) {
            let mut x = f;
            x.extend_from_slice(&prev);
            inputs.push(x);
            let t = self.normalizer.tau(&s.tau);
            prev.clone_from(&t);
            targets.push(t);
        }
        Ok(Design { inputs, targets })
    }

    fn metrics_from_design(&self, d: &Design, ds: &Dataset) -> Result<Metrics> {
        let pred = d
            .inputs
            .iter()
            .map(|x| Ok(self.normalizer.tau_inverse(&self.readout.forward(x)?)))
            .collect::<Result<Vec<_>>>()?;
        readout::nmse(&pred, &ds.torques())
    }

    /// Physical-unit torque predictions with measured previous torques.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        let d = self.design(ds)?;
        d.inputs
            .iter()
            .map(|x| Ok(self.normalizer.tau_inverse(&self.readout.forward(x)?)))
            .collect()
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<Metrics> {
        readout::nmse(&self.predict(ds)?, &ds.torques())
    }

    /// Online feedforward for closed-loop tracking.
    pub fn predictor(&self) -> Result<Predictor<'_>> {
        Ok(Predictor {
            pipeline: self,
            encoder: Encoder::new(self.encoder.clone())?,
            reservoir: self.reservoir.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        if p.format != ARTIFACT_FORMAT || p.version != ARTIFACT_VERSION {
            return Err(config(format!(
                "unsupported model artifact {} v{}",
                p.format, p.version
            )));
        }
        p.reservoir.check_structure()?;
        if p.readout.n_in != p.reservoir.len() + p.dof() || p.readout.n_out != p.dof() {
            return Err(Error::Data("model artifact has inconsistent dimensions".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Streaming torque predictor holding its own liquid state.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    pipeline: &'a Pipeline,
    encoder: Encoder,
    reservoir: Reservoir,
}

impl Predictor<'_> {
    /// Physical-unit torque for one desired state.
    pub fn step(&mut self, state: &[f64], prev_tau: &[f64]) -> Result<Vec<f64>> {
        let p = self.pipeline;
        if prev_tau.len() != p.dof() {
            return Err(shape("previous torque has the wrong joint count"));
        }
        let sched = self.encoder.encode(&p.normalizer.state(state))?;
        let features = self.reservoir.simulate_window(&sched)?;
        let y = p.readout.predict(&features, &p.normalizer.tau(prev_tau))?;
        Ok(p.normalizer.tau_inverse(&y))
    }
}

impl Feedforward for Predictor<'_> {
    fn reset(&mut self) {
        self.encoder.reset();
        self.reservoir.reset_state();
    }

    fn torque(&mut self, q: &[f64], dq: &[f64], ddq: &[f64], prev_applied: &[f64]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(3 * q.len());
        x.extend_from_slice(q);
        x.extend_from_slice(dq);
        x.extend_from_slice(ddq);
        self.step(&x, prev_applied)
    }
}

/// Joint-averaged validation NMSE of a pipeline trained on `train`; failed
/// or undefined runs score `+∞`.
pub fn validation_nmse(cfg: &PipelineConfig, train: &Dataset, validation: &Dataset) -> f64 {
    match Pipeline::train(cfg, train, Some(validation)) {
        Ok(out) => out
            .validation_metrics
            .and_then(|m| m.mean_nmse)
            .unwrap_or(f64::INFINITY),
        Err(e) => {
            log::warn!("fitness evaluation failed: {e}");
            f64::INFINITY
        }
    }
}
