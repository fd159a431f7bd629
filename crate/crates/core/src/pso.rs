//! Particle swarm search over box-bounded, partly integer parameters.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        if params.is_empty() {
            return Err(config("search space has no parameters"));
        }
        for p in &params {
            if !(p.lower < p.upper) || !p.lower.is_finite() || !p.upper.is_finite() {
                return Err(config(format!(
                    "parameter {} needs lower < upper, got [{}, {}]",
                    p.name, p.lower, p.upper
                )));
            }
        }
        Ok(Self { params })
    }

    /// Liquid size, input probability and the four class constants.
    pub fn reservoir_default() -> Self {
        let params = crate::snn::SEARCH_BOUNDS
            .iter()
            .map(|&(name, lower, upper)| Param {
                name: name.to_string(),
                lower,
                upper,
                kind: if name == "n" {
                    ParamKind::Int
                } else {
                    ParamKind::Float
                },
            })
            .collect();
        Self { params }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Clips into bounds and rounds integer parameters.
    pub fn project(&self, x: &mut [f64]) {
        for (v, p) in x.iter_mut().zip(&self.params) {
            *v = v.clamp(p.lower, p.upper);
            if p.kind == ParamKind::Int {
                *v = v.round().clamp(p.lower.ceil(), p.upper.floor());
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.params).all(|(v, p)| {
                *v >= p.lower && *v <= p.upper && (p.kind == ParamKind::Float || v.fract() == 0.0)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    /// `+∞` until first evaluated; failed evaluations also count as `+∞`.
    pub best_fitness: f64,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    space: SearchSpace,
    cfg: PsoConfig,
    particles: Vec<Particle>,
    best_position: Vec<f64>,
    best_fitness: f64,
    evaluated: bool,
    rng: ChaCha8Rng,
}

impl Swarm {
    /// Positions uniform in bounds, velocities uniform in `±(upper − lower)/2`.
    pub fn new(space: SearchSpace, n_particles: usize, seed: u64, cfg: PsoConfig) -> Result<Self> {
        if n_particles == 0 {
            return Err(config("swarm needs at least one particle"));
        }
        let mut rng = seed::rng(seed);
        let particles: Vec<Particle> = (0..n_particles)
            .map(|_| {
                let mut position: Vec<f64> = space
                    .params
                    .iter()
                    .map(|p| rng.gen_range(p.lower..=p.upper))
                    .collect();
                space.project(&mut position);
                let velocity = space
                    .params
                    .iter()
                    .map(|p| {
                        let half = (p.upper - p.lower) / 2.0;
                        rng.gen_range(-half..=half)
                    })
                    .collect();
                Particle {
                    best_position: position.clone(),
                    position,
                    velocity,
                    best_fitness: f64::INFINITY,
                }
            })
            .collect();
        Ok(Self {
            best_position: particles[0].position.clone(),
            best_fitness: f64::INFINITY,
            space,
            cfg,
            particles,
            evaluated: false,
            rng,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn best_position(&self) -> &[f64] {
        &self.best_position
    }

    pub fn best_fitness(&self) -> f64 {
        self.best_fitness
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// One iteration: move every particle (skipped on the very first call,
    /// which only scores the initial positions), evaluate the new positions
    /// in parallel and update the personal and global bests.
    pub fn step<F>(&mut self, fitness: &F)
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if self.evaluated {
            self.advance();
        }
        self.evaluated = true;
        let scores: Vec<f64> = self
            .particles
            .par_iter()
            .map(|p| {
                let f = fitness(&p.position);
                if f.is_nan() {
                    f64::INFINITY
                } else {
                    f
                }
            })
            .collect();
        // merged in particle order so serial and parallel runs agree
        for (p, f) in self.particles.iter_mut().zip(scores) {
            if f < p.best_fitness {
                p.best_fitness = f;
                p.best_position.clone_from(&p.position);
            }
            if f < self.best_fitness {
                self.best_fitness = f;
                self.best_position.clone_from(&p.position);
            }
        }
    }

    fn advance(&mut self) {
        let PsoConfig {
            inertia,
            cognitive,
            social,
        } = self.cfg;
        for p in &mut self.particles {
            for (d, param) in self.space.params.iter().enumerate() {
                let r1: f64 = self.rng.gen();
                let r2: f64 = self.rng.gen();
                let vmax = param.upper - param.lower;
                let v = inertia * p.velocity[d]
                    + cognitive * r1 * (p.best_position[d] - p.position[d])
                    + social * r2 * (self.best_position[d] - p.position[d]);
                p.velocity[d] = v.clamp(-vmax, vmax);
                p.position[d] += p.velocity[d];
            }
            self.space.project(&mut p.position);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub best_fitness: f64,
    pub best_position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<HistoryEntry>,
}

impl SearchResult {
    pub fn write_csv<W: Write>(&self, space: &SearchSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "best_fitness".to_string()];
        header.extend(space.params().iter().map(|p| p.name.clone()));
        w.write_record(&header)?;
        for h in &self.history {
            let mut row = vec![h.iteration.to_string(), h.best_fitness.to_string()];
            row.extend(h.best_position.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initializes a swarm and runs `n_iters` iterations, recording the global
/// best after each.
pub fn search<F>(
    space: &SearchSpace,
    n_particles: usize,
    n_iters: usize,
    seed: u64,
    cfg: PsoConfig,
    fitness: F,
) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_iters < 1 {
        return Err(config("search needs at least one iteration"));
    }
    let mut swarm = Swarm::new(space.clone(), n_particles, seed, cfg)?;
    let mut history = Vec::with_capacity(n_iters);
    for it in 0..n_iters {
        swarm.step(&fitness);
        history.push(HistoryEntry {
            iteration: it + 1,
            best_fitness: swarm.best_fitness(),
            best_position: swarm.best_position().to_vec(),
        });
        log::debug!("pso iteration {} best {}", it + 1, swarm.best_fitness());
    }
    Ok(SearchResult {
        best_position: swarm.best_position().to_vec(),
        best_fitness: swarm.best_fitness(),
        history,
    })
}
