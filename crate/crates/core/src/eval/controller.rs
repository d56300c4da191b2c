use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{SkillCommand, SkillFeedback, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::planner::{assemble_observation_into, heuristic_plan, ObsConfig, PlannerHistory, PlannerPolicy};
use crate::so3::{RotationAxis, UnitQuat};

/// What a controller sees at one decision point.
pub struct ControlInput<'a> {
    pub history: &'a PlannerHistory,
    pub goal: UnitQuat,
    pub z: SkillFeedback,
}

/// A planner-level decision rule evaluated on a batch of live episodes.
pub trait Controller: Sync {
    fn name(&self) -> String;

    /// Length of the pose history the controller needs.
    fn history_len(&self) -> usize {
        1
    }

    fn act_batch(&self, inputs: &[ControlInput<'_>], rngs: &mut [&mut ChaCha8Rng]) -> Result<Vec<SkillCommand>>;
}

/// Trained planner. `deterministic` takes the most likely axis and the mean
/// residual.
pub struct LearnedController<'a> {
    pub policy: &'a PlannerPolicy,
    pub deterministic: bool,
    pub label: String,
}

impl Controller for LearnedController<'_> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn history_len(&self) -> usize {
        self.policy.config.obs.history
    }

    fn act_batch(&self, inputs: &[ControlInput<'_>], rngs: &mut [&mut ChaCha8Rng]) -> Result<Vec<SkillCommand>> {
        let cfg: ObsConfig = self.policy.config.obs;
        let mut obs = Array2::<f64>::zeros((inputs.len(), cfg.dim()));
        for (i, inp) in inputs.iter().enumerate() {
            let mut row = obs.row_mut(i);
            assemble_observation_into(&cfg, inp.history, &inp.goal, &inp.z, row.as_slice_mut().expect("contiguous"))?;
        }
        let out = self.policy.predict(obs.view())?;
        let mut cmds = Vec::with_capacity(inputs.len());
        for (i, rng) in rngs.iter_mut().enumerate() {
            cmds.push(self.policy.act(out.row(i), &mut **rng, self.deterministic)?.command);
        }
        Ok(cmds)
    }
}

/// Greedy axis selection on the latest observed pose.
pub struct HeuristicController {
    pub step_angle: f64,
    pub threshold: f64,
}

impl Controller for HeuristicController {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn act_batch(&self, inputs: &[ControlInput<'_>], _rngs: &mut [&mut ChaCha8Rng]) -> Result<Vec<SkillCommand>> {
        inputs
            .iter()
            .map(|inp| {
                let q = inp.history.latest().ok_or_else(|| Error::InvalidInput("empty history".into()))?.q;
                Ok(SkillCommand::new(heuristic_plan(&q, &inp.goal, self.step_angle, self.threshold)))
            })
            .collect()
    }
}

/// Uniform over the six rotation axes with a uniform residual in
/// `±residual_limit`. Never issues STOP.
pub struct RandomController {
    pub residual_limit: f64,
}

impl Controller for RandomController {
    fn name(&self) -> String {
        "random".into()
    }

    fn act_batch(&self, inputs: &[ControlInput<'_>], rngs: &mut [&mut ChaCha8Rng]) -> Result<Vec<SkillCommand>> {
        let lim = self.residual_limit;
        Ok(rngs
            .iter_mut()
            .take(inputs.len())
            .map(|rng| {
                let axis = RotationAxis::ROTATIONS[rng.random_range(0..6)];
                let mut c = SkillCommand::new(axis);
                for j in 0..NUM_JOINTS {
                    c.residual[j] = if lim > 0.0 { rng.random_range(-lim..=lim) } else { 0.0 };
                }
                c
            })
            .collect())
    }
}

/// Always issues the same command.
pub struct FixedController {
    pub axis: RotationAxis,
}

impl Controller for FixedController {
    fn name(&self) -> String {
        format!("always-{}", self.axis)
    }

    fn act_batch(&self, inputs: &[ControlInput<'_>], _rngs: &mut [&mut ChaCha8Rng]) -> Result<Vec<SkillCommand>> {
        Ok(inputs.iter().map(|_| SkillCommand::new(self.axis)).collect())
    }
}
