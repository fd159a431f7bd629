//! Spike encoding of state vectors.
//!
//! Each state dimension `d` owns two input channels: `2d` (excitatory) and
//! `2d + 1` (inhibitory). A sample is presented to the reservoir as a window
//! of `window` simulation steps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    Delta,
    Rate,
    Direct,
}

impl EncodingMode {
    pub const ALL: [EncodingMode; 3] = [EncodingMode::Delta, EncodingMode::Rate, EncodingMode::Direct];

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::Delta => "delta",
            EncodingMode::Rate => "rate",
            EncodingMode::Direct => "direct",
        }
    }
}

impl std::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EncodingMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(EncodingMode::Delta),
            "rate" => Ok(EncodingMode::Rate),
            "direct" => Ok(EncodingMode::Direct),
            other => Err(config(format!(
                "unknown encoder `{other}` (expected delta, rate or direct)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncodingMode,
    /// Simulation steps per sample; also the per-window spike-count cap.
    pub window: usize,
    /// Spike quantum per dimension (state units per spike).
    pub theta: Vec<f64>,
    /// Per-dimension `(min, max)` used by rate encoding.
    pub rate_range: Vec<(f64, f64)>,
}

impl EncoderConfig {
    /// Same quantum for every dimension, rate range `[-1, 1]`.
    pub fn uniform(mode: EncodingMode, dim: usize, window: usize, theta: f64) -> Self {
        Self {
            mode,
            window,
            theta: vec![theta; dim],
            rate_range: vec![(-1.0, 1.0); dim],
        }
    }

    /// Fits the per-dimension quanta and rate ranges to a training stream.
    ///
    /// `theta_d = theta_scale · std(x_d(t) − x_d(t−1)) / window`, so a jump of
    /// `theta_scale` standard deviations of the sample-to-sample change fills
    /// the window. Rate ranges are the per-dimension min/max.
    pub fn fit(mode: EncodingMode, window: usize, theta_scale: f64, states: &[Vec<f64>]) -> Result<Self> {
        if window == 0 {
            return Err(config("encoder window must be at least 1 step"));
        }
        if !(theta_scale > 0.0 && theta_scale.is_finite()) {
            return Err(config("theta_scale must be positive"));
        }
        let Some(first) = states.first() else {
            return Err(crate::Error::Data("cannot fit an encoder on no samples".into()));
        };
        let dim = first.len();
        let diffs: Vec<Vec<f64>> = states
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect();
        let theta = if diffs.is_empty() {
            vec![1.0 / window as f64; dim]
        } else {
            let (_, sd) = crate::dataset::mean_std(&diffs);
            sd.iter().map(|s| theta_scale * s / window as f64).collect()
        };
        let mut rate_range = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for x in states {
            for (r, v) in rate_range.iter_mut().zip(x) {
                r.0 = r.0.min(*v);
                r.1 = r.1.max(*v);
            }
        }
        for r in &mut rate_range {
            if r.0 >= r.1 {
                *r = (r.0 - 1.0, r.0 + 1.0);
            }
        }
        let cfg = Self {
            mode,
            window,
            theta,
            rate_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(config("encoder window must be at least 1 step"));
        }
        if self.theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config("every theta must be positive and finite"));
        }
        if self.rate_range.len() != self.theta.len() {
            return Err(config("rate_range and theta must have one entry per dimension"));
        }
        if self.mode == EncodingMode::Rate
            && self
                .rate_range
                .iter()
                .any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(config("rate encoding needs min < max for every dimension"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn channels(&self) -> usize {
        2 * self.dim()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(shape(format!(
                "encoder expects {} state dimensions, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Binary spikes (0 or 1 per step and channel).
    Spikes,
    /// Analog input currents.
    Analog,
}

/// Input drive for one sample window, `window × channels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSchedule {
    window: usize,
    channels: usize,
    kind: ScheduleKind,
    values: Vec<f64>,
}

impl SpikeSchedule {
    pub fn zeros(kind: ScheduleKind, window: usize, channels: usize) -> Self {
        Self {
            window,
            channels,
            kind,
            values: vec![0.0; window * channels],
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn at(&self, step: usize, channel: usize) -> f64 {
        self.values[step * self.channels + channel]
    }

    pub fn step(&self, step: usize) -> &[f64] {
        &self.values[step * self.channels..(step + 1) * self.channels]
    }

    pub fn set(&mut self, step: usize, channel: usize, value: f64) {
        self.values[step * self.channels + channel] = value;
    }

    /// Spikes (or summed current) on one channel over the window.
    pub fn total(&self, channel: usize) -> f64 {
        (0..self.window).map(|s| self.at(s, channel)).sum()
    }

    pub fn count(&self, channel: usize) -> usize {
        self.total(channel).round() as usize
    }

    /// Spikes on steps `0..n` of a channel.
    fn burst(&mut self, channel: usize, n: usize) {
        for s in 0..n.min(self.window) {
            self.set(s, channel, 1.0);
        }
    }

    /// One row per step: `sample,step,ch0,...`.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>, sample: usize) -> Result<()> {
        for s in 0..self.window {
            let mut row = vec![sample.to_string(), s.to_string()];
            row.extend(self.step(s).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        Ok(())
    }
}

/// Spike count for a change `delta` with quantum `theta`:
/// `min(floor(|delta| / theta), window)`.
pub fn delta_spike_count(delta: f64, theta: f64, window: usize) -> usize {
    let n = (delta.abs() / theta).floor();
    if n >= window as f64 {
        window
    } else {
        n as usize
    }
}

/// Delta encoding of `x_t` against the previous sample.
///
/// On the first sample (`x_prev = None`) the change is `x_t` itself.
pub fn delta_encode(x_t: &[f64], x_prev: Option<&[f64]>, cfg: &EncoderConfig) -> Result<SpikeSchedule> {
    cfg.check(x_t)?;
    if let Some(p) = x_prev {
        cfg.check(p)?;
    }
    let mut sched = SpikeSchedule::zeros(ScheduleKind::Spikes, cfg.window, cfg.channels());
    for d in 0..cfg.dim() {
        let delta = x_t[d] - x_prev.map_or(0.0, |p| p[d]);
        let n = delta_spike_count(delta, cfg.theta[d], cfg.window);
        if n > 0 {
            let channel = if delta > 0.0 { 2 * d } else { 2 * d + 1 };
            sched.burst(channel, n);
        }
    }
    Ok(sched)
}

/// Rate encoding: the value is mapped affinely from its range onto
/// `[0, window]` spikes on the excitatory channel.
pub fn rate_encode(x_t: &[f64], cfg: &EncoderConfig) -> Result<SpikeSchedule> {
    cfg.check(x_t)?;
    let mut sched = SpikeSchedule::zeros(ScheduleKind::Spikes, cfg.window, cfg.channels());
    for (d, &v) in x_t.iter().enumerate() {
        let (lo, hi) = cfg.rate_range[d];
        if !(lo < hi) {
            return Err(config(format!("degenerate rate range for dimension {d}")));
        }
        let frac = (v.clamp(lo, hi) - lo) / (hi - lo);
        let n = (frac * cfg.window as f64).round() as usize;
        sched.burst(2 * d, n);
    }
    Ok(sched)
}

/// Direct encoding: the value is a constant current on the excitatory
/// channel for the whole window.
pub fn direct_encode(x_t: &[f64], cfg: &EncoderConfig) -> Result<SpikeSchedule> {
    cfg.check(x_t)?;
    let mut sched = SpikeSchedule::zeros(ScheduleKind::Analog, cfg.window, cfg.channels());
    for s in 0..cfg.window {
        for (d, &v) in x_t.iter().enumerate() {
            sched.set(s, 2 * d, v);
        }
    }
    Ok(sched)
}

/// Streaming encoder that remembers the previous sample of a trajectory.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    prev: Option<Vec<f64>>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, prev: None })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Forgets the previous sample; call at trajectory boundaries.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    pub fn encode(&mut self, x: &[f64]) -> Result<SpikeSchedule> {
        let sched = match self.cfg.mode {
            EncodingMode::Delta => delta_encode(x, self.prev.as_deref(), &self.cfg)?,
            EncodingMode::Rate => rate_encode(x, &self.cfg)?,
            EncodingMode::Direct => direct_encode(x, &self.cfg)?,
        };
        self.prev = Some(x.to_vec());
        Ok(sched)
    }
}
