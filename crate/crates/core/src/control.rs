//! Two-link planar arm, PD feedback and the closed-loop tracking harness.
//!
//! Joint angles are measured from the downward vertical, so `q = 0` is the
//! arm hanging at rest and gravity torque vanishes there.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config, shape, Result};

/// Physical parameters of the planar two-link arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
    /// Viscous joint friction (N·m·s/rad).
    pub friction: f64,
}

impl Default for PlantParams {
    /// Uniform 1 kg, 1 m rods.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            g: 9.81,
            friction: 0.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m1, self.m2, self.l1, self.l2, self.lc1, self.lc2, self.i1, self.i2, self.g,
            self.friction,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(config("plant parameters must be finite"));
        }
        if self.m1 <= 0.0 || self.m2 <= 0.0 || self.l1 <= 0.0 || self.l2 <= 0.0 {
            return Err(config("link masses and lengths must be positive"));
        }
        if self.lc1 < 0.0 || self.lc2 < 0.0 || self.lc1 > self.l1 || self.lc2 > self.l2 {
            return Err(config("centre-of-mass offsets must lie on the links"));
        }
        if self.i1 < 0.0 || self.i2 < 0.0 || self.friction < 0.0 {
            return Err(config("inertias and friction must be non-negative"));
        }
        Ok(())
    }

    /// Joint-space inertia matrix `M(q)`.
    pub fn mass_matrix(&self, q: [f64; 2]) -> [[f64; 2]; 2] {
        let c2 = q[1].cos();
        let m22 = self.m2 * self.lc2 * self.lc2 + self.i2;
        let m12 = m22 + self.m2 * self.l1 * self.lc2 * c2;
        let m11 = self.m1 * self.lc1 * self.lc1
            + self.i1
            + self.m2 * (self.l1 * self.l1 + 2.0 * self.l1 * self.lc2 * c2)
            + m22;
        [[m11, m12], [m12, m22]]
    }

    /// Coriolis and centripetal torques `C(q, q̇)·q̇`.
    pub fn coriolis(&self, q: [f64; 2], dq: [f64; 2]) -> [f64; 2] {
        let h = self.m2 * self.l1 * self.lc2 * q[1].sin();
        [
            -h * (2.0 * dq[0] * dq[1] + dq[1] * dq[1]),
            h * dq[0] * dq[0],
        ]
    }

    /// Gravity torques `G(q)`.
    pub fn gravity(&self, q: [f64; 2]) -> [f64; 2] {
        let s1 = q[0].sin();
        let s12 = (q[0] + q[1]).sin();
        let g2 = self.m2 * self.g * self.lc2 * s12;
        [(self.m1 * self.lc1 + self.m2 * self.l1) * self.g * s1 + g2, g2]
    }

    /// Kinetic plus potential energy; the potential is zero at the hanging pose.
    pub fn energy(&self, q: [f64; 2], dq: [f64; 2]) -> f64 {
        let m = self.mass_matrix(q);
        let kinetic = 0.5
            * (m[0][0] * dq[0] * dq[0] + 2.0 * m[0][1] * dq[0] * dq[1] + m[1][1] * dq[1] * dq[1]);
        let h1 = self.lc1 * (1.0 - q[0].cos());
        let h2 = self.l1 * (1.0 - q[0].cos()) + self.lc2 * (1.0 - (q[0] + q[1]).cos());
        kinetic + self.g * (self.m1 * h1 + self.m2 * h2)
    }
}

/// `τ = M(q)q̈ + C(q,q̇)q̇ + G(q) + b·q̇`.
pub fn inverse_dynamics(q: [f64; 2], dq: [f64; 2], ddq: [f64; 2], p: &PlantParams) -> [f64; 2] {
    let m = p.mass_matrix(q);
    let c = p.coriolis(q, dq);
    let g = p.gravity(q);
    [
        m[0][0] * ddq[0] + m[0][1] * ddq[1] + c[0] + g[0] + p.friction * dq[0],
        m[1][0] * ddq[0] + m[1][1] * ddq[1] + c[1] + g[1] + p.friction * dq[1],
    ]
}

/// `q̈ = M(q)⁻¹ (τ − C(q,q̇)q̇ − G(q) − b·q̇)`.
pub fn forward_dynamics(q: [f64; 2], dq: [f64; 2], tau: [f64; 2], p: &PlantParams) -> [f64; 2] {
    let m = p.mass_matrix(q);
    let c = p.coriolis(q, dq);
    let g = p.gravity(q);
    let r0 = tau[0] - c[0] - g[0] - p.friction * dq[0];
    let r1 = tau[1] - c[1] - g[1] - p.friction * dq[1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (m[1][1] * r0 - m[0][1] * r1) / det,
        (m[0][0] * r1 - m[1][0] * r0) / det,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmState {
    pub q: [f64; 2],
    pub dq: [f64; 2],
}

/// Semi-implicit Euler: velocity first, then position with the new velocity.
pub fn integrate_step(state: ArmState, tau: [f64; 2], dt: f64, p: &PlantParams) -> ArmState {
    let ddq = forward_dynamics(state.q, state.dq, tau, p);
    let dq = [state.dq[0] + ddq[0] * dt, state.dq[1] + ddq[1] * dt];
    let q = [state.q[0] + dq[0] * dt, state.q[1] + dq[1] * dt];
    ArmState { q, dq }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl FeedbackGains {
    pub fn uniform(dof: usize, kp: f64, kd: f64) -> Self {
        Self {
            kp: vec![kp; dof],
            kd: vec![kd; dof],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.len() != self.kd.len() {
            return Err(config("kp and kd must have the same length"));
        }
        if self
            .kp
            .iter()
            .chain(&self.kd)
            .any(|g| !g.is_finite() || *g < 0.0)
        {
            return Err(config("feedback gains must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `τ_fb = kp∘(q_d − q) + kd∘(q̇_d − q̇)`.
pub fn pd_feedback(
    desired_q: &[f64],
    desired_dq: &[f64],
    q: &[f64],
    dq: &[f64],
    gains: &FeedbackGains,
) -> Result<Vec<f64>> {
    let n = gains.kp.len();
    if [desired_q.len(), desired_dq.len(), q.len(), dq.len(), gains.kd.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(shape(format!("pd_feedback expects {n} joints")));
    }
    Ok((0..n)
        .map(|j| gains.kp[j] * (desired_q[j] - q[j]) + gains.kd[j] * (desired_dq[j] - dq[j]))
        .collect())
}

/// Source of the feedforward torque in the tracking loop.
pub trait Feedforward {
    /// Called once before the first step of a run.
    fn reset(&mut self);

    /// Feedforward torque for the next desired state.
    ///
    /// `prev_applied` is the torque actually applied to the plant on the
    /// previous control step (zero before the first step).
    fn torque(
        &mut self,
        q: &[f64],
        dq: &[f64],
        ddq: &[f64],
        prev_applied: &[f64],
    ) -> Result<Vec<f64>>;
}

/// Exact model-based feedforward from the plant's own equations.
#[derive(Debug, Clone)]
pub struct AnalyticFeedforward(pub PlantParams);

impl Feedforward for AnalyticFeedforward {
    fn reset(&mut self) {}

    fn torque(&mut self, q: &[f64], dq: &[f64], ddq: &[f64], _: &[f64]) -> Result<Vec<f64>> {
        Ok(inverse_dynamics(pair(q)?, pair(dq)?, pair(ddq)?, &self.0).to_vec())
    }
}

pub(crate) fn pair(v: &[f64]) -> Result<[f64; 2]> {
    v.try_into()
        .map_err(|_| shape(format!("two-link plant expects 2 joints, got {}", v.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    /// Integration step of the plant (s). The control period, one trajectory
    /// sample, must be an integer multiple of it.
    pub plant_dt: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { plant_dt: 0.001 }
    }
}

/// Per-step record of a tracking run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackingLog {
    pub t: Vec<f64>,
    pub desired_q: Vec<Vec<f64>>,
    pub desired_dq: Vec<Vec<f64>>,
    pub desired_ddq: Vec<Vec<f64>>,
    pub actual_q: Vec<Vec<f64>>,
    pub actual_dq: Vec<Vec<f64>>,
    pub actual_ddq: Vec<Vec<f64>>,
    pub feedforward: Vec<Vec<f64>>,
    pub feedback: Vec<Vec<f64>>,
    pub applied: Vec<Vec<f64>>,
}

impl TrackingLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Root-mean-square joint position error over all steps and joints.
    pub fn rms_position_error(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (d, a) in self.desired_q.iter().zip(&self.actual_q) {
            for (x, y) in d.iter().zip(a) {
                sum += (x - y).powi(2);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dof = self.desired_q.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for group in [
            "q_des", "dq_des", "ddq_des", "q_act", "dq_act", "ddq_act", "tau_ff", "tau_fb",
            "tau_applied",
        ] {
            header.extend((0..dof).map(|j| format!("{group}{j}")));
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.t[k].to_string()];
            for group in [
                &self.desired_q,
                &self.desired_dq,
                &self.desired_ddq,
                &self.actual_q,
                &self.actual_dq,
                &self.actual_ddq,
                &self.feedforward,
                &self.feedback,
                &self.applied,
            ] {
                row.extend(group[k].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the closed loop over a desired trajectory.
///
/// Each control period: feedforward from `feedforward` (or zero when `None`),
/// PD feedback from the measured state, their sum held on the plant for the
/// whole period. The plant starts at the first desired position and velocity.
pub fn track(
    desired: &Dataset,
    mut feedforward: Option<&mut dyn Feedforward>,
    gains: &FeedbackGains,
    params: &PlantParams,
    cfg: &TrackConfig,
) -> Result<TrackingLog> {
    params.validate()?;
    gains.validate()?;
    if desired.dof() != 2 || gains.kp.len() != 2 {
        return Err(config("tracking runs on the two-link plant (2 joints)"));
    }
    if !(cfg.plant_dt > 0.0) {
        return Err(config("plant_dt must be positive"));
    }
    let period = 1.0 / desired.rate_hz();
    let ratio = period / cfg.plant_dt;
    let substeps = ratio.round();
    if substeps < 1.0 || (ratio - substeps).abs() > 1e-9 * ratio {
        return Err(config(format!(
            "trajectory period {period} s is not a multiple of the plant step {} s",
            cfg.plant_dt
        )));
    }
    let substeps = substeps as usize;
    let dt = period / substeps as f64;

    if let Some(ff) = feedforward.as_deref_mut() {
        ff.reset();
    }
    let first = &desired.samples()[0];
    let mut state = ArmState {
        q: pair(&first.q)?,
        dq: pair(&first.dq)?,
    };
    let mut prev_applied = vec![0.0; 2];
    let mut log = TrackingLog::default();
    for s in desired.samples() {
        let tau_ff = match feedforward.as_deref_mut() {
            Some(ff) => ff.torque(&s.q, &s.dq, &s.ddq, &prev_applied)?,
            None => vec![0.0; 2],
        };
        if tau_ff.len() != 2 {
            return Err(shape("feedforward must return 2 torques"));
        }
        let tau_fb = pd_feedback(&s.q, &s.dq, &state.q, &state.dq, gains)?;
        let applied: Vec<f64> = tau_ff.iter().zip(&tau_fb).map(|(a, b)| a + b).collect();
        if applied.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Numerical(format!(
                "non-finite torque at t = {}",
                s.t
            )));
        }
        let tau = pair(&applied)?;
        let ddq = forward_dynamics(state.q, state.dq, tau, params);

        log.t.push(s.t);
        log.desired_q.push(s.q.clone());
        log.desired_dq.push(s.dq.clone());
        log.desired_ddq.push(s.ddq.clone());
        log.actual_q.push(state.q.to_vec());
        log.actual_dq.push(state.dq.to_vec());
        log.actual_ddq.push(ddq.to_vec());
        log.feedforward.push(tau_ff);
        log.feedback.push(tau_fb);
        log.applied.push(applied.clone());

        for _ in 0..substeps {
            state = integrate_step(state, tau, dt, params);
        }
        prev_applied = applied;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: PlantParams = PlantParams {
        m1: 1.0,
        m2: 1.0,
        l1: 1.0,
        l2: 1.0,
        lc1: 0.5,
        lc2: 0.5,
        i1: 1.0 / 12.0,
        i2: 1.0 / 12.0,
        g: 9.81,
        friction: 0.0,
    };

    #[test]
    fn hanging_rest_needs_no_torque() {
        assert_eq!(inverse_dynamics([0.0; 2], [0.0; 2], [0.0; 2], &P), [0.0, 0.0]);
        assert_eq!(forward_dynamics([0.0; 2], [0.0; 2], [0.0; 2], &P), [0.0, 0.0]);
        let s = integrate_step(ArmState::default(), [0.0; 2], 0.001, &P);
        assert_eq!(s, ArmState::default());
    }

    #[test]
    fn unit_acceleration_of_first_joint_gives_first_mass_column() {
        // Uniform rods: M11 = 2·(1/12) + 0.25 + 1 + 0.25 + 2·0.5 = 8/3 at q2 = 0,
        // M21 = 1/12 + 0.25 + 0.5 = 5/6.
        let tau = inverse_dynamics([0.0; 2], [0.0; 2], [1.0, 0.0], &P);
        assert!((tau[0] - 8.0 / 3.0).abs() < 1e-12);
        assert!((tau[1] - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_compensation_holds_any_rest_pose() {
        for q in [[0.3, -1.2], [2.0, 0.5], [-0.7, 3.0]] {
            let ddq = forward_dynamics(q, [0.0; 2], P.gravity(q), &P);
            assert!(ddq[0].abs() < 1e-12 && ddq[1].abs() < 1e-12);
        }
    }

    #[test]
    fn gravity_vanishes_hanging_and_inverted() {
        let pi = std::f64::consts::PI;
        for q in [[0.0, 0.0], [pi, 0.0], [0.0, pi], [pi, -pi]] {
            let g = P.gravity(q);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{q:?}");
        }
    }

    #[test]
    fn pd_feedback_examples() {
        let g = FeedbackGains::uniform(2, 10.0, 0.0);
        let t = pd_feedback(&[0.1, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &g).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-15 && t[1] == 0.0);
        let g = FeedbackGains::uniform(2, 0.0, 2.0);
        let t = pd_feedback(&[0.0, 0.0], &[0.0, -0.5], &[0.0, 0.0], &[0.0, 0.0], &g).unwrap();
        assert_eq!(t, vec![0.0, -1.0]);
        let g = FeedbackGains::uniform(2, 3.0, 4.0);
        let t = pd_feedback(&[0.4, 0.2], &[1.0, 1.0], &[0.4, 0.2], &[1.0, 1.0], &g).unwrap();
        assert_eq!(t, vec![0.0, 0.0]);
        assert!(pd_feedback(&[0.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &g).is_err());
    }

    #[test]
    fn friction_is_part_of_both_directions() {
        let p = PlantParams {
            friction: 0.3,
            ..P
        };
        let (q, dq, ddq) = ([0.2, 0.4], [1.0, -2.0], [0.5, 0.1]);
        let tau = inverse_dynamics(q, dq, ddq, &p);
        let back = forward_dynamics(q, dq, tau, &p);
        assert!((back[0] - ddq[0]).abs() < 1e-12 && (back[1] - ddq[1]).abs() < 1e-12);
        let frictionless = inverse_dynamics(q, dq, ddq, &P);
        assert!((tau[0] - frictionless[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(P.validate().is_ok());
        assert!(PlantParams { m1: 0.0, ..P }.validate().is_err());
        assert!(PlantParams { lc2: 1.5, ..P }.validate().is_err());
    }
}
