//! Scripted axis-conditioned rotation skill.
//!
//! Joint layout: `j = 4 * finger + k` with fingers index, middle, ring,
//! thumb and `k = 0, 1` proximal, `k = 2, 3` distal.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EnvConfig, PhysicsParams, Shape, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::so3::{quat_from_axis_angle, sample_unit_vec3, RotationAxis, UnitQuat, Vec3};

pub const FEEDBACK_DIM: usize = 8;
pub const NUM_GRASPS: usize = 8;

/// One planner decision: an axis (or STOP) plus a residual joint offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCommand {
    pub axis: RotationAxis,
    pub residual: [f64; NUM_JOINTS],
}

impl SkillCommand {
    pub fn new(axis: RotationAxis) -> Self {
        SkillCommand { axis, residual: [0.0; NUM_JOINTS] }
    }

    pub fn with_residual(axis: RotationAxis, residual: &[f64]) -> Result<Self> {
        if residual.len() != NUM_JOINTS {
            return Err(Error::dims("command residual", NUM_JOINTS, residual.len()));
        }
        let mut r = [0.0; NUM_JOINTS];
        r.copy_from_slice(residual);
        Ok(SkillCommand { axis, residual: r })
    }

    pub fn validate(&self, limit: f64) -> Result<()> {
        if self.residual.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("command residual".into()));
        }
        if self.residual.iter().any(|v| v.abs() > limit + 1e-12) {
            return Err(Error::InvalidInput(format!("residual exceeds ±{limit} rad")));
        }
        Ok(())
    }
}

/// Noisy encoding of the physics parameters: normalized size, speed and slip
/// probability, shape one-hot, bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillFeedback {
    pub z: [f64; FEEDBACK_DIM],
}

impl SkillFeedback {
    pub fn clean(phys: &PhysicsParams) -> Self {
        let mut z = [0.0; FEEDBACK_DIM];
        z[0] = (phys.size_scale - 1.0) / 0.1;
        z[1] = (phys.speed_factor - 1.0) / 0.3;
        z[2] = (phys.slip_prob - 0.01) / 0.01;
        z[3 + phys.shape.index()] = 1.0;
        z[7] = 1.0;
        SkillFeedback { z }
    }

    pub fn noisy<R: Rng + ?Sized>(phys: &PhysicsParams, std: f64, rng: &mut R) -> Self {
        let mut f = Self::clean(phys);
        if std > 0.0 {
            for v in f.z.iter_mut().take(FEEDBACK_DIM - 1) {
                *v += std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        f
    }
}

/// Gait phase and the last rotation axis, carried across control steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillState {
    pub phase: f64,
    pub last_axis: Option<RotationAxis>,
}

impl Default for SkillState {
    fn default() -> Self {
        SkillState { phase: 0.0, last_axis: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillStepOutput {
    pub a_skill: [f64; NUM_JOINTS],
    pub z: SkillFeedback,
    /// Total object rotation over the control step (world frame).
    pub delta_q: UnitQuat,
    /// Position jump from slips or grasp loss; drift is added by the env.
    pub delta_p: Vec3,
    pub slip: bool,
    /// Rotation vector of the slip, zero without one.
    pub slip_rotation: Vec3,
    pub grasp_lost: bool,
}

/// The fixed grasp set a reset draws from.
pub fn grasp_config(g: usize) -> [f64; NUM_JOINTS] {
    const BASE: [[f64; 4]; 4] = [[0.05, 0.60, 0.50, 0.40], [0.0, 0.65, 0.50, 0.40], [-0.05, 0.60, 0.45, 0.40], [0.90, 0.30, 0.40, 0.50]];
    let mut th = [0.0; NUM_JOINTS];
    for (j, t) in th.iter_mut().enumerate() {
        *t = BASE[j / 4][j % 4] + 0.08 * (1.3 * g as f64 + 0.7 * j as f64).sin();
    }
    th
}

fn axis_slot(axis: RotationAxis) -> f64 {
    axis.index() as f64
}

/// Posture offset of the gait for a rotation axis.
pub fn gait_offset(axis: RotationAxis) -> [f64; NUM_JOINTS] {
    let mut b = [0.0; NUM_JOINTS];
    if axis.is_stop() {
        return b;
    }
    let k = axis_slot(axis);
    for (j, v) in b.iter_mut().enumerate() {
        *v = 0.12 * (1.9 * k + 1.1 * j as f64 + 0.3).sin();
    }
    b
}

/// Gait joint targets relative to the grasp posture.
pub fn gait(axis: RotationAxis, phase: f64, speed_factor: f64) -> [f64; NUM_JOINTS] {
    let mut a = gait_offset(axis);
    if axis.is_stop() {
        return a;
    }
    let k = axis_slot(axis);
    let dir = if axis.index() % 2 == 0 { 1.0 } else { -1.0 };
    for (j, v) in a.iter_mut().enumerate() {
        let amp = 0.2 * (0.6 + 0.4 * (0.8 * k + 0.5 * j as f64).cos().abs());
        let psi = dir * 0.9 * j as f64 + k;
        *v += amp * speed_factor * (phase + psi).sin();
    }
    a
}

/// Residual-to-rotation coupling `J_res` (3×16): the two distal joints of
/// the index, middle and ring fingers drive +x, +y, +z; the thumb's distal
/// joints drive −z.
pub fn j_res() -> [[f64; NUM_JOINTS]; 3] {
    let mut j = [[0.0; NUM_JOINTS]; 3];
    for k in [2, 3] {
        j[0][k] = 1.0;
        j[1][4 + k] = 1.0;
        j[2][8 + k] = 1.0;
        j[2][12 + k] = -1.0;
    }
    j
}

/// Rotation vector produced by a residual: `gain · J_res · residual`.
pub fn residual_rotation(residual: &[f64; NUM_JOINTS], gain: f64) -> Vec3 {
    let j = j_res();
    let mut w = [0.0; 3];
    for (r, row) in w.iter_mut().zip(j.iter()) {
        *r = gain * row.iter().zip(residual.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    w
}

/// Joint offset that makes the scripted gait hold this object well.
pub fn ideal_residual(shape: Shape, size_scale: f64) -> [f64; NUM_JOINTS] {
    let s = shape.index() as f64;
    let size = ((size_scale - 1.0) / 0.1).clamp(-1.0, 1.0);
    let mut r = [0.0; NUM_JOINTS];
    for (j, v) in r.iter_mut().enumerate() {
        let distal = j % 4 >= 2;
        let common = if distal { 0.03 } else { 0.0 };
        let by_shape = if shape == Shape::Sphere { 0.0 } else { 0.035 * (2.3 * s + 1.7 * j as f64).sin() };
        let by_size = if distal { 0.0 } else { -0.015 * size };
        *v = common + by_shape + by_size;
    }
    r
}

/// Grasp mismatch in units of `mismatch_ref`.
pub fn grasp_mismatch(residual: &[f64; NUM_JOINTS], phys: &PhysicsParams, mismatch_ref: f64) -> f64 {
    let ideal = ideal_residual(phys.shape, phys.size_scale);
    let ms = residual.iter().zip(ideal.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / NUM_JOINTS as f64;
    ms.sqrt() / mismatch_ref
}

/// One control step of the scripted skill. Advances the gait phase unless
/// the command is STOP.
pub fn skill_step<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    skill: &mut SkillState,
    phys: &PhysicsParams,
    cmd: &SkillCommand,
    rng: &mut R,
) -> Result<SkillStepOutput> {
    cmd.validate(cfg.residual_limit)?;
    let grasp = grasp_config(phys.grasp_index);
    let gait_axis = if cmd.axis.is_stop() { skill.last_axis.unwrap_or(RotationAxis::Stop) } else { cmd.axis };
    let pattern = gait(gait_axis, skill.phase, phys.speed_factor);
    let mut a_skill = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        a_skill[j] = grasp[j] + pattern[j];
    }

    let m2 = if cfg.slip_enabled { grasp_mismatch(&cmd.residual, phys, cfg.grasp.mismatch_ref).powi(2) } else { 0.0 };
    let mut delta_q = UnitQuat::IDENTITY;
    if !cmd.axis.is_stop() {
        let mut angle = cfg.omega_nom * phys.speed_factor / (1.0 + cfg.grasp.mismatch_slowdown * m2);
        if phys.rot_noise_std > 0.0 {
            angle += Normal::new(0.0, phys.rot_noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(rng);
        }
        delta_q = quat_from_axis_angle(cmd.axis, angle)?;
    }
    let w = residual_rotation(&cmd.residual, cfg.residual_gain);
    if w.iter().any(|v| *v != 0.0) {
        delta_q = UnitQuat::from_rotation_vector(w) * delta_q;
    }

    let mut delta_p = [0.0; 3];
    let mut slip = false;
    let mut slip_rotation = [0.0; 3];
    let mut grasp_lost = false;
    if cfg.slip_enabled {
        let switching = matches!(skill.last_axis, Some(prev) if !cmd.axis.is_stop() && prev != cmd.axis);
        let mut p_slip = phys.slip_prob + cfg.grasp.mismatch_slip_gain * m2;
        if switching {
            p_slip += cfg.grasp.transition_slip;
        }
        if rng.random::<f64>() < p_slip.min(1.0) {
            slip = true;
            let axis = sample_unit_vec3(rng);
            let mag = rng.random_range(0.1..0.4);
            slip_rotation = [axis[0] * mag, axis[1] * mag, axis[2] * mag];
            delta_q = UnitQuat::from_rotation_vector(slip_rotation) * delta_q;
            let dir = sample_unit_vec3(rng);
            let jump = rng.random_range(0.002..0.008);
            delta_p = [dir[0] * jump, dir[1] * jump, dir[2] * jump];
        }
        if rng.random::<f64>() < (cfg.grasp.grasp_loss_gain * m2).min(1.0) {
            grasp_lost = true;
            delta_p[2] -= 2.0 * cfg.drop_threshold;
        }
    }

    if !cmd.axis.is_stop() {
        skill.phase = (skill.phase + cfg.gait_phase_step) % TAU;
        skill.last_axis = Some(cmd.axis);
    }
    let z = SkillFeedback::noisy(phys, cfg.feedback_noise_std, rng);
    Ok(SkillStepOutput { a_skill, z, delta_q, delta_p, slip, slip_rotation, grasp_lost })
}
