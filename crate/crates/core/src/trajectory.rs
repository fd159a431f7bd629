//! Minimum-jerk point-to-point motions in joint space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::seed;

/// Position, velocity and acceleration of every joint at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
}

/// A sampled motion through a list of via-points.
///
/// The via-points are visited at equally spaced times spanning `duration_s`,
/// each segment being a rest-to-rest minimum-jerk move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub duration_s: f64,
    pub rate_hz: f64,
    pub via_points: Vec<Vec<f64>>,
}

impl TrajectorySpec {
    /// Random point-reaching motion that starts from the zero pose.
    ///
    /// Every via-point after the first is drawn uniformly from
    /// `[-amplitude, amplitude]` per joint.
    pub fn random_reaching(
        dof: usize,
        n_moves: usize,
        move_duration_s: f64,
        rate_hz: f64,
        amplitude: f64,
        seed: u64,
    ) -> Self {
        let mut rng = seed::rng(seed);
        let mut via_points = vec![vec![0.0; dof]];
        for _ in 0..n_moves {
            via_points.push(
                (0..dof)
                    .map(|_| rng.gen_range(-amplitude..=amplitude))
                    .collect(),
            );
        }
        Self {
            duration_s: move_duration_s * n_moves as f64,
            rate_hz,
            via_points,
        }
    }

    /// A single rest-to-rest reach.
    pub fn reach(start: Vec<f64>, goal: Vec<f64>, duration_s: f64, rate_hz: f64) -> Self {
        Self {
            duration_s,
            rate_hz,
            via_points: vec![start, goal],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(config(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        let Some(first) = self.via_points.first() else {
            return Err(config("trajectory needs at least one via-point"));
        };
        if first.is_empty() {
            return Err(config("via-points must have at least one joint"));
        }
        if self.via_points.iter().any(|p| p.len() != first.len()) {
            return Err(config("via-points have inconsistent joint counts"));
        }
        if self.via_points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(config("via-points must be finite"));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.via_points.first().map_or(0, Vec::len)
    }

    /// Number of samples, `round(duration · rate)`.
    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    /// Time at which via-point `k` is reached.
    pub fn via_time(&self, k: usize) -> f64 {
        let moves = self.via_points.len().saturating_sub(1);
        if moves == 0 {
            0.0
        } else {
            self.duration_s * k as f64 / moves as f64
        }
    }

    /// Evaluates the motion at time `t`, clamped to `[0, duration_s]`.
    pub fn evaluate(&self, t: f64) -> JointState {
        let dof = self.dof();
        let moves = self.via_points.len() - 1;
        if moves == 0 {
            return JointState {
                q: self.via_points[0].clone(),
                dq: vec![0.0; dof],
                ddq: vec![0.0; dof],
            };
        }
        let seg_t = self.duration_s / moves as f64;
        let t = t.clamp(0.0, self.duration_s);
        let k = ((t / seg_t).floor() as usize).min(moves - 1);
        let from = &self.via_points[k];
        let to = &self.via_points[k + 1];
        let (s, ds, dds) = min_jerk_profile((t - k as f64 * seg_t) / seg_t, seg_t);
        let mut out = JointState {
            q: Vec::with_capacity(dof),
            dq: Vec::with_capacity(dof),
            ddq: Vec::with_capacity(dof),
        };
        for (a, b) in from.iter().zip(to) {
            let d = b - a;
            out.q.push(a + d * s);
            out.dq.push(d * ds);
            out.ddq.push(d * dds);
        }
        out
    }

    /// All samples at `t = i / rate_hz`, `i < sample_count()`.
    pub fn sample(&self) -> Result<Vec<(f64, JointState)>> {
        self.validate()?;
        Ok((0..self.sample_count())
            .map(|i| {
                let t = i as f64 / self.rate_hz;
                (t, self.evaluate(t))
            })
            .collect())
    }
}

/// Normalized minimum-jerk blend and its time derivatives for a segment of
/// length `duration`, evaluated at phase `u ∈ [0, 1]`.
pub fn min_jerk_profile(u: f64, duration: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    let u2 = u * u;
    let u3 = u2 * u;
    let s = u3 * (10.0 - 15.0 * u + 6.0 * u2);
    let ds = 30.0 * u2 * (1.0 - u) * (1.0 - u) / duration;
    let dds = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (duration * duration);
    (s, ds, dds)
}
