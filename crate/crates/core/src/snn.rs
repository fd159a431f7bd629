//! Leaky integrate-and-fire liquid.
//!
//! Neurons sit on a cubic grid and connect with a probability that decays
//! with distance. The structure is frozen at construction; only the membrane
//! state evolves.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{ScheduleKind, SpikeSchedule};
use crate::error::{config, shape, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub v_rest: f64,
    pub v_thresh: f64,
    /// Membrane leak constant (ms).
    pub tau1: f64,
    /// Membrane drive constant (ms).
    pub tau2: f64,
    /// Synaptic current decay constant (ms).
    pub tau3: f64,
    /// Simulation step (ms).
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            v_rest: 0.0,
            v_thresh: 1.0,
            tau1: 20.0,
            tau2: 20.0,
            tau3: 5.0,
            dt: 1.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tau1, self.tau2, self.tau3, self.dt];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(config("LIF time constants and dt must be positive"));
        }
        if !(self.v_thresh > self.v_rest) || !self.v_rest.is_finite() || !self.v_thresh.is_finite() {
            return Err(config("v_thresh must exceed v_rest"));
        }
        Ok(())
    }

    /// Synaptic weight whose single spike, ignoring the membrane leak, lifts
    /// a resting neuron exactly to threshold.
    pub fn unit_weight(&self) -> f64 {
        (self.v_thresh - self.v_rest) * self.tau2 / self.tau3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub i_syn: f64,
}

/// One forward-Euler step of the current-based LIF neuron.
///
/// `weighted_spike_input` is added to the synaptic current after its decay;
/// `analog_input` drives the membrane directly alongside it.
pub fn lif_step(
    state: NeuronState,
    p: &LifParams,
    weighted_spike_input: f64,
    analog_input: f64,
) -> (NeuronState, bool) {
    let i_syn = state.i_syn + p.dt * (-state.i_syn / p.tau3) + weighted_spike_input;
    let v = state.v + p.dt * (-(state.v - p.v_rest) / p.tau1 + (i_syn + analog_input) / p.tau2);
    if v >= p.v_thresh {
        (NeuronState { v: p.v_rest, i_syn }, true)
    } else {
        (NeuronState { v, i_syn }, false)
    }
}

pub fn pairwise_distance(a: [i32; 3], b: [i32; 3]) -> f64 {
    let d2: i64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| i64::from(x - y).pow(2))
        .sum();
    (d2 as f64).sqrt()
}

/// `min(1, c · exp(−d / λ))`.
pub fn connection_probability(d: f64, c: f64, lambda: f64) -> f64 {
    (c * (-d / lambda).exp()).min(1.0)
}

/// Raster-order positions on the smallest cube holding `n` neurons
/// (x fastest, then y, then z).
pub fn grid_positions(n: usize) -> Vec<[i32; 3]> {
    let mut side = (n as f64).cbrt().round() as usize;
    while side.pow(3) < n {
        side += 1;
    }
    while side > 1 && (side - 1).pow(3) >= n {
        side -= 1;
    }
    (0..n)
        .map(|i| {
            [
                (i % side) as i32,
                ((i / side) % side) as i32,
                (i / (side * side)) as i32,
            ]
        })
        .collect()
}

/// Connection-probability constants per (presynaptic → postsynaptic) class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConstants {
    pub ee: f64,
    pub ei: f64,
    pub ie: f64,
    pub ii: f64,
}

impl ClassConstants {
    pub fn get(&self, pre_inhibitory: bool, post_inhibitory: bool) -> f64 {
        match (pre_inhibitory, post_inhibitory) {
            (false, false) => self.ee,
            (false, true) => self.ei,
            (true, false) => self.ie,
            (true, true) => self.ii,
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.ee, self.ei, self.ie, self.ii]
    }
}

/// Weight magnitude multipliers.
///
/// A recurrent weight of class `k` is drawn from `(0, k · unit / indegree_k]`,
/// where `unit` is [`LifParams::unit_weight`] and `indegree_k` the expected
/// number of class-`k` inputs per postsynaptic neuron. Input weights are drawn
/// from `(0, input · unit]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightScales {
    pub ee: f64,
    pub ei: f64,
    pub ie: f64,
    pub ii: f64,
    pub input: f64,
}

impl Default for WeightScales {
    fn default() -> Self {
        Self {
            ee: 0.5,
            ei: 1.0,
            ie: 1.0,
            ii: 0.5,
            input: 1.0,
        }
    }
}

impl WeightScales {
    fn class(&self, pre_inhibitory: bool, post_inhibitory: bool) -> f64 {
        ClassConstants {
            ee: self.ee,
            ei: self.ei,
            ie: self.ie,
            ii: self.ii,
        }
        .get(pre_inhibitory, post_inhibitory)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirConfig {
    pub n: usize,
    pub p_input: f64,
    pub c: ClassConstants,
    pub lambda: f64,
    pub inhibitory_fraction: f64,
    pub w_scales: WeightScales,
    pub lif: LifParams,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n: 125,
            p_input: 0.5,
            c: ClassConstants {
                ee: 1.0,
                ei: 0.8,
                ie: 0.8,
                ii: 0.4,
            },
            lambda: 2.0,
            inhibitory_fraction: 0.2,
            w_scales: WeightScales::default(),
            lif: LifParams::default(),
            seed: 0,
        }
    }
}

/// Bounds the structural search may produce.
pub const SEARCH_BOUNDS: [(&str, f64, f64); 6] = [
    ("n", 100.0, 512.0),
    ("p_input", 0.25, 0.85),
    ("c_ee", 0.4, 1.7),
    ("c_ei", 0.2, 1.5),
    ("c_ie", 0.2, 1.5),
    ("c_ii", 0.1, 0.7),
];

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(config("reservoir needs at least one neuron"));
        }
        if !(self.p_input > 0.0 && self.p_input <= 1.0) {
            return Err(config("p_input must lie in (0, 1]"));
        }
        if self.c.values().iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(config("connection constants must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&self.inhibitory_fraction) {
            return Err(config("inhibitory_fraction must lie in [0, 1]"));
        }
        let w = &self.w_scales;
        if [w.ee, w.ei, w.ie, w.ii, w.input]
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(config("weight scales must be finite and non-negative"));
        }
        self.lif.validate()
    }

    /// The structural parameters in search order: n, p_input, c_ee, c_ei, c_ie, c_ii.
    pub fn search_vector(&self) -> [f64; 6] {
        [
            self.n as f64,
            self.p_input,
            self.c.ee,
            self.c.ei,
            self.c.ie,
            self.c.ii,
        ]
    }

    /// Copy with the structural parameters replaced by a search position.
    pub fn with_search_vector(&self, x: &[f64]) -> Result<Self> {
        if x.len() != 6 {
            return Err(shape(format!("search position has {} entries, expected 6", x.len())));
        }
        Ok(Self {
            n: x[0].round() as usize,
            p_input: x[1],
            c: ClassConstants {
                ee: x[2],
                ei: x[3],
                ie: x[4],
                ii: x[5],
            },
            ..self.clone()
        })
    }

    /// Checks the structural parameters against the search ranges, naming
    /// the violated bound.
    pub fn validate_search_bounds(&self) -> Result<()> {
        for ((name, lo, hi), v) in SEARCH_BOUNDS.iter().zip(self.search_vector()) {
            if v < *lo || v > *hi {
                return Err(config(format!("{name} = {v} is outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub target: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    lif: LifParams,
    n_inputs: usize,
    positions: Vec<[i32; 3]>,
    inhibitory: Vec<bool>,
    /// Outgoing edges per input channel.
    input_edges: Vec<Vec<Synapse>>,
    /// Outgoing edges per liquid neuron.
    recurrent_edges: Vec<Vec<Synapse>>,
    state: Vec<NeuronState>,
    prev_spikes: Vec<bool>,
}

impl Reservoir {
    /// Builds the liquid for `n_inputs` input channels. Fully determined by
    /// `cfg` (including its seed).
    pub fn build(cfg: &ReservoirConfig, n_inputs: usize) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let mut rng = seed::rng(cfg.seed);
        let positions = grid_positions(n);

        let n_inh = ((cfg.inhibitory_fraction * n as f64).round() as usize).min(n);
        let mut inhibitory = vec![false; n];
        for i in sample(&mut rng, n, n_inh) {
            inhibitory[i] = true;
        }

        // probabilities first: the weight bounds depend on expected in-degree
        let prob = |i: usize, j: usize| {
            connection_probability(
                pairwise_distance(positions[i], positions[j]),
                cfg.c.get(inhibitory[i], inhibitory[j]),
                cfg.lambda,
            )
        };
        let mut indegree = [0.0f64; 4];
        let mut posts = [0usize; 4];
        for j in 0..n {
            for i in 0..n {
                indegree[class_index(inhibitory[i], inhibitory[j])] += prob(i, j);
            }
            posts[class_index(false, inhibitory[j])] += 1;
            posts[class_index(true, inhibitory[j])] += 1;
        }
        let unit = cfg.lif.unit_weight();
        let bound = |pre: bool, post: bool| {
            let k = class_index(pre, post);
            let mean_in = if posts[k] > 0 {
                indegree[k] / posts[k] as f64
            } else {
                0.0
            };
            cfg.w_scales.class(pre, post) * unit / mean_in.max(1.0)
        };

        let mut recurrent_edges = vec![Vec::new(); n];
        for (i, edges) in recurrent_edges.iter_mut().enumerate() {
            for j in 0..n {
                if rng.gen::<f64>() < prob(i, j) {
                    let magnitude = bound(inhibitory[i], inhibitory[j]) * (1.0 - rng.gen::<f64>());
                    let weight = if inhibitory[i] { -magnitude } else { magnitude };
                    edges.push(Synapse {
                        target: j as u32,
                        weight,
                    });
                }
            }
        }

        let input_bound = cfg.w_scales.input * unit;
        let mut input_edges = vec![Vec::new(); n_inputs];
        for edges in &mut input_edges {
            for j in (0..n).filter(|&j| !inhibitory[j]) {
                if rng.gen::<f64>() < cfg.p_input {
                    edges.push(Synapse {
                        target: j as u32,
                        weight: input_bound * (1.0 - rng.gen::<f64>()),
                    });
                }
            }
        }

        Ok(Self {
            lif: cfg.lif,
            n_inputs,
            positions,
            inhibitory,
            input_edges,
            recurrent_edges,
            state: vec![
                NeuronState {
                    v: cfg.lif.v_rest,
                    i_syn: 0.0
                };
                n
            ],
            prev_spikes: vec![false; n],
        })
    }

    /// Hand-wired reservoir. Positions are laid out on the default grid.
    pub fn from_parts(
        lif: LifParams,
        inhibitory: Vec<bool>,
        input_edges: Vec<Vec<Synapse>>,
        recurrent_edges: Vec<Vec<Synapse>>,
    ) -> Result<Self> {
        lif.validate()?;
        let n = inhibitory.len();
        if recurrent_edges.len() != n {
            return Err(shape("one outgoing edge list per neuron is required"));
        }
        let res = Self {
            lif,
            n_inputs: input_edges.len(),
            positions: grid_positions(n),
            inhibitory,
            input_edges,
            recurrent_edges,
            state: vec![
                NeuronState {
                    v: lif.v_rest,
                    i_syn: 0.0
                };
                n
            ],
            prev_spikes: vec![false; n],
        };
        res.check_structure()?;
        Ok(res)
    }

    /// Sign discipline, excitatory-only input targets, in-range indices.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.len();
        for (pre, edges) in self.recurrent_edges.iter().enumerate() {
            for e in edges {
                if e.target as usize >= n {
                    return Err(shape(format!("edge {pre} → {} out of range", e.target)));
                }
                let ok = if self.inhibitory[pre] {
                    e.weight <= 0.0
                } else {
                    e.weight >= 0.0
                };
                if !ok {
                    return Err(config(format!(
                        "weight {pre} → {} has the wrong sign for its presynaptic type",
                        e.target
                    )));
                }
            }
        }
        for (ch, edges) in self.input_edges.iter().enumerate() {
            for e in edges {
                if e.target as usize >= n || self.inhibitory[e.target as usize] {
                    return Err(config(format!(
                        "input channel {ch} must target excitatory neurons only"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inhibitory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inhibitory.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn lif(&self) -> &LifParams {
        &self.lif
    }

    pub fn positions(&self) -> &[[i32; 3]] {
        &self.positions
    }

    pub fn is_inhibitory(&self) -> &[bool] {
        &self.inhibitory
    }

    pub fn input_edges(&self) -> &[Vec<Synapse>] {
        &self.input_edges
    }

    pub fn recurrent_edges(&self) -> &[Vec<Synapse>] {
        &self.recurrent_edges
    }

    pub fn state(&self) -> &[NeuronState] {
        &self.state
    }

    pub fn prev_spikes(&self) -> &[bool] {
        &self.prev_spikes
    }

    /// Membrane and synaptic state back to rest; call between trajectories.
    pub fn reset_state(&mut self) {
        let rest = NeuronState {
            v: self.lif.v_rest,
            i_syn: 0.0,
        };
        self.state.fill(rest);
        self.prev_spikes.fill(false);
    }

    /// Advances one simulation step and returns which neurons fired.
    ///
    /// Every neuron receives the input drive of this step plus the recurrent
    /// spikes of the previous step.
    pub fn step_once(&mut self, drive: &[f64], kind: ScheduleKind) -> Result<&[bool]> {
        if drive.len() != self.n_inputs {
            return Err(shape(format!(
                "drive has {} channels, reservoir expects {}",
                drive.len(),
                self.n_inputs
            )));
        }
        let n = self.len();
        let mut spike_in = vec![0.0; n];
        let mut analog_in = vec![0.0; n];
        let sink = match kind {
            ScheduleKind::Spikes => &mut spike_in,
            ScheduleKind::Analog => &mut analog_in,
        };
        for (edges, &x) in self.input_edges.iter().zip(drive) {
            if x != 0.0 {
                for e in edges {
                    sink[e.target as usize] += e.weight * x;
                }
            }
        }
        for (edges, _) in self
            .recurrent_edges
            .iter()
            .zip(&self.prev_spikes)
            .filter(|(_, &fired)| fired)
        {
            for e in edges {
                spike_in[e.target as usize] += e.weight;
            }
        }
        for k in 0..n {
            let (s, fired) = lif_step(self.state[k], &self.lif, spike_in[k], analog_in[k]);
            if !(s.v.is_finite() && s.i_syn.is_finite()) {
                return Err(crate::Error::Numerical(format!("neuron {k} diverged")));
            }
            self.state[k] = s;
            self.prev_spikes[k] = fired;
        }
        Ok(&self.prev_spikes)
    }

    /// Runs one sample window and returns each neuron's spike count divided
    /// by the window length. State carries over to the next window.
    pub fn simulate_window(&mut self, sched: &SpikeSchedule) -> Result<Vec<f64>> {
        if sched.channels() != self.n_inputs {
            return Err(shape(format!(
                "schedule has {} channels, reservoir expects {}",
                sched.channels(),
                self.n_inputs
            )));
        }
        let mut counts = vec![0u32; self.len()];
        for s in 0..sched.window() {
            let fired = self.step_once(sched.step(s), sched.kind())?;
            for (c, &f) in counts.iter_mut().zip(fired) {
                *c += u32::from(f);
            }
        }
        let w = sched.window() as f64;
        Ok(counts.into_iter().map(|c| f64::from(c) / w).collect())
    }
}

fn class_index(pre_inhibitory: bool, post_inhibitory: bool) -> usize {
    usize::from(pre_inhibitory) * 2 + usize::from(post_inhibitory)
}
