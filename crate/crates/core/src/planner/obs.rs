//! Planner observation: `H` frames of object state, `H` goal deltas, the
//! previous `H` actions and the skill feedback, oldest frame first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{ObservedPose, SkillFeedback, FEEDBACK_DIM};
use crate::error::{Error, Result};
use crate::so3::{quat_to_6d, relative_pose, RotationAxis, UnitQuat, Vec3};

pub const STATE_FRAME_DIM: usize = 9;
pub const DELTA_FRAME_DIM: usize = 6;
pub const ACTION_DIM: usize = RotationAxis::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsConfig {
    pub history: usize,
    /// Positions enter as `(p - palm_center) * pos_scale`.
    pub pos_scale: f64,
    pub use_z: bool,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig { history: 6, pos_scale: 20.0, use_z: true }
    }
}

impl ObsConfig {
    pub fn dim(&self) -> usize {
        self.history * (STATE_FRAME_DIM + DELTA_FRAME_DIM + ACTION_DIM) + FEEDBACK_DIM
    }
}

/// Sliding window of observed poses and past planner actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerHistory {
    capacity: usize,
    origin: Vec3,
    poses: VecDeque<ObservedPose>,
    actions: VecDeque<RotationAxis>,
}

impl PlannerHistory {
    pub fn new(capacity: usize, origin: Vec3) -> Self {
        PlannerHistory { capacity, origin, poses: VecDeque::new(), actions: VecDeque::new() }
    }

    pub fn reset(&mut self, first: ObservedPose) {
        self.poses.clear();
        self.actions.clear();
        self.poses.push_back(first);
    }

    pub fn push_pose(&mut self, pose: ObservedPose) {
        if self.poses.len() == self.capacity {
            self.poses.pop_front();
        }
        self.poses.push_back(pose);
    }

    pub fn push_action(&mut self, axis: RotationAxis) {
        if self.actions.len() == self.capacity {
            self.actions.pop_front();
        }
        self.actions.push_back(axis);
    }

    pub fn latest(&self) -> Option<&ObservedPose> {
        self.poses.back()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &ObservedPose> {
        self.poses.iter()
    }
}

/// Writes the observation into `out` (length `cfg.dim()`).
pub fn assemble_observation_into(
    cfg: &ObsConfig,
    history: &PlannerHistory,
    goal: &UnitQuat,
    z: &SkillFeedback,
    out: &mut [f64],
) -> Result<()> {
    if history.is_empty() {
        return Err(Error::InvalidInput("planner history is empty".into()));
    }
    if out.len() != cfg.dim() {
        return Err(Error::dims("planner observation", cfg.dim(), out.len()));
    }
    let h = cfg.history;
    let pad = h.saturating_sub(history.poses.len());
    let skip = history.poses.len().saturating_sub(h);
    let first = history.poses[0];
    let frames = std::iter::repeat_n(&first, pad).chain(history.poses.iter().skip(skip));
    let (states, rest) = out.split_at_mut(h * STATE_FRAME_DIM);
    let (deltas, rest) = rest.split_at_mut(h * DELTA_FRAME_DIM);
    let (actions, zs) = rest.split_at_mut(h * ACTION_DIM);
    for (i, pose) in frames.enumerate() {
        let s = &mut states[i * STATE_FRAME_DIM..(i + 1) * STATE_FRAME_DIM];
        for k in 0..3 {
            s[k] = (pose.p[k] - history.origin[k]) * cfg.pos_scale;
        }
        s[3..].copy_from_slice(&quat_to_6d(&pose.q).0);
        let zeta = relative_pose(&pose.q, goal);
        deltas[i * DELTA_FRAME_DIM..(i + 1) * DELTA_FRAME_DIM].copy_from_slice(&quat_to_6d(&zeta).0);
    }
    actions.iter_mut().for_each(|v| *v = 0.0);
    let na = history.actions.len().min(h);
    let a_skip = history.actions.len() - na;
    for (i, a) in history.actions.iter().skip(a_skip).enumerate() {
        let slot = h - na + i;
        actions[slot * ACTION_DIM + a.index()] = 1.0;
    }
    if cfg.use_z {
        zs.copy_from_slice(&z.z);
    } else {
        zs.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(())
}

pub fn assemble_observation(cfg: &ObsConfig, history: &PlannerHistory, goal: &UnitQuat, z: &SkillFeedback) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.dim()];
    assemble_observation_into(cfg, history, goal, z, &mut out)?;
    Ok(out)
}
