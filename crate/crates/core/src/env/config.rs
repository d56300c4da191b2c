use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Shape;
use crate::error::{Error, Result};
use crate::planner::RewardConfig;

/// Per-episode physics randomization ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsRanges {
    pub size_scale: [f64; 2],
    pub speed_factor: [f64; 2],
    pub slip_prob: [f64; 2],
    /// Std of the along-axis rotation noise added to every skill step (rad).
    pub rot_noise_std: f64,
    /// Std of the Ornstein-Uhlenbeck position drift per control step (m).
    pub pos_noise_std: f64,
    pub shapes: Vec<Shape>,
    /// Widens every range about its nominal centre; 1.0 is the training
    /// distribution.
    pub range_multiplier: f64,
}

impl Default for PhysicsRanges {
    fn default() -> Self {
        PhysicsRanges {
            size_scale: [0.9, 1.1],
            speed_factor: [0.7, 1.3],
            slip_prob: [0.0, 0.02],
            rot_noise_std: 0.02,
            pos_noise_std: 0.0005,
            shapes: Shape::ALL.to_vec(),
            range_multiplier: 1.0,
        }
    }
}

impl PhysicsRanges {
    fn widened(range: [f64; 2], mult: f64, lo_floor: f64) -> [f64; 2] {
        let c = 0.5 * (range[0] + range[1]);
        let h = 0.5 * (range[1] - range[0]) * mult;
        [(c - h).max(lo_floor), c + h]
    }

    pub fn effective_size(&self) -> [f64; 2] {
        Self::widened(self.size_scale, self.range_multiplier, 0.1)
    }

    pub fn effective_speed(&self) -> [f64; 2] {
        Self::widened(self.speed_factor, self.range_multiplier, 0.05)
    }

    pub fn effective_slip(&self) -> [f64; 2] {
        Self::widened(self.slip_prob, self.range_multiplier, 0.0)
    }
}

/// Observation noise applied to the object state the planner sees in
/// stage 1 (ground truth plus Gaussian noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsNoise {
    /// Per-axis std of the rotation-vector perturbation (rad).
    pub rot_std: f64,
    /// Per-axis position std (m).
    pub pos_std: f64,
}

impl Default for ObsNoise {
    fn default() -> Self {
        ObsNoise { rot_std: 0.05, pos_std: 0.005 }
    }
}

/// Grasp-adaptation model of the scripted skill: the gait is tuned for a
/// nominal object, and every other shape or size needs a joint offset to hold
/// it well. Deviating from that offset raises the slip hazard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    /// Extra slip probability per step per unit of squared mismatch.
    pub mismatch_slip_gain: f64,
    /// RMS joint offset (rad) that counts as one unit of mismatch.
    pub mismatch_ref: f64,
    /// Per-step probability of losing the object per unit of squared
    /// mismatch; a lost object falls below the drop threshold.
    pub grasp_loss_gain: f64,
    /// Extra slip probability on a step that switches rotation axis.
    pub transition_slip: f64,
    /// Joint jolt std (rad) applied to the hand when a slip happens.
    pub slip_jolt_std: f64,
    /// A slip drags the distal joints by `slip_drag · J_resᵀ w` for slip
    /// rotation vector `w`.
    pub slip_drag: f64,
    /// The skill rotation angle is divided by `1 + mismatch_slowdown · m²`.
    pub mismatch_slowdown: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig {
            mismatch_slip_gain: 0.05,
            mismatch_ref: 0.04,
            grasp_loss_gain: 0.01,
            transition_slip: 0.03,
            slip_jolt_std: 0.05,
            slip_drag: 0.5,
            mismatch_slowdown: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    /// Fraction of the target error closed per control step.
    pub alpha: f64,
    pub kp: f64,
    pub kd: f64,
    pub limit: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig { alpha: 0.6, kp: 3.0, kd: 0.1, limit: std::f64::consts::FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub seed: u64,
    /// Nominal skill rotation per control step (rad).
    pub omega_nom: f64,
    pub control_hz: f64,
    pub substeps: usize,
    pub horizon: usize,
    pub drop_threshold: f64,
    pub success_threshold: f64,
    /// A STOP issued away from the goal ends the episode as a failure.
    pub stop_terminates: bool,
    pub slip_enabled: bool,
    pub palm_center: [f64; 3],
    pub residual_limit: f64,
    /// Rotation (rad) per unit of `J_res · residual`.
    pub residual_gain: f64,
    pub feedback_noise_std: f64,
    /// Gait phase advance per control step (rad).
    pub gait_phase_step: f64,
    pub physics: PhysicsRanges,
    pub obs_noise: ObsNoise,
    pub grasp: GraspConfig,
    pub joints: JointConfig,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            seed: 0,
            omega_nom: 0.15,
            control_hz: 20.0,
            substeps: 6,
            horizon: 300,
            drop_threshold: 0.05,
            success_threshold: 0.4,
            stop_terminates: true,
            slip_enabled: true,
            palm_center: [0.0, 0.0, 0.0],
            residual_limit: 0.1,
            residual_gain: 0.02,
            feedback_noise_std: 0.05,
            gait_phase_step: std::f64::consts::FRAC_PI_4,
            physics: PhysicsRanges::default(),
            obs_noise: ObsNoise::default(),
            grasp: GraspConfig::default(),
            joints: JointConfig::default(),
            reward: RewardConfig { epsilon: 0.1, success_bonus: 1000.0 },
        }
    }
}

impl EnvConfig {
    pub fn dt_ctrl(&self) -> f64 {
        1.0 / self.control_hz
    }

    /// Small-noise evaluation setting (0.05 rad / 0.005 m).
    pub fn small_noise() -> Self {
        EnvConfig::default()
    }

    /// Large-noise setting (0.15 rad / 0.015 m).
    pub fn large_noise() -> Self {
        EnvConfig { obs_noise: ObsNoise { rot_std: 0.15, pos_std: 0.015 }, ..EnvConfig::default() }
    }

    /// Noise channels off: no process noise, no slips, no observation or
    /// feedback noise. Physics parameters are still sampled.
    pub fn noise_free() -> Self {
        let mut c = EnvConfig::default();
        c.slip_enabled = false;
        c.physics.rot_noise_std = 0.0;
        c.physics.pos_noise_std = 0.0;
        c.obs_noise = ObsNoise { rot_std: 0.0, pos_std: 0.0 };
        c.feedback_noise_std = 0.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("env config: {m}")));
        if !(self.omega_nom.is_finite() && self.omega_nom >= 0.0) {
            return bad("omega_nom must be finite and >= 0");
        }
        if self.substeps == 0 || self.horizon == 0 {
            return bad("substeps and horizon must be positive");
        }
        if !(self.control_hz > 0.0) {
            return bad("control_hz must be positive");
        }
        if !(self.drop_threshold > 0.0 && self.success_threshold > 0.0) {
            return bad("thresholds must be positive");
        }
        if self.physics.shapes.is_empty() {
            return bad("shape set is empty");
        }
        for (name, r) in [
            ("size_scale", self.physics.size_scale),
            ("speed_factor", self.physics.speed_factor),
            ("slip_prob", self.physics.slip_prob),
        ] {
            if !(r[0] <= r[1]) || r.iter().any(|v| !v.is_finite()) {
                return bad(&format!("range {name} must be finite with lo <= hi"));
            }
        }
        if self.physics.range_multiplier < 0.0 {
            return bad("range_multiplier must be >= 0");
        }
        if self.obs_noise.rot_std < 0.0 || self.obs_noise.pos_std < 0.0 || self.feedback_noise_std < 0.0 {
            return bad("noise std must be >= 0");
        }
        if !(self.grasp.mismatch_slowdown >= 0.0) {
            return bad("mismatch_slowdown must be >= 0");
        }
        if !(self.reward.epsilon > 0.0 && self.reward.success_bonus >= 0.0) {
            return bad("reward needs epsilon > 0 and success_bonus >= 0");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: EnvConfig = serde_json::from_str(&s)?;
        c.validate()?;
        Ok(c)
    }
}
