use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::obs::{ObsConfig, ACTION_DIM};
use crate::env::{SkillCommand, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::env::FEEDBACK_DIM;
use crate::nn::{categorical_head, gaussian_head, gaussian_log_prob, log_softmax, Linear, Mlp, MlpCache, Module, ParamView};
use crate::so3::RotationAxis;

/// Output layout: 7 axis logits, 16 residual means, 1 value.
pub const POLICY_OUT: usize = ACTION_DIM + NUM_JOINTS + 1;
const MEAN_OFF: usize = ACTION_DIM;
const VALUE_OFF: usize = ACTION_DIM + NUM_JOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden: [usize; 2],
    pub use_residual: bool,
    pub init_log_std: f64,
    pub out_gain: f64,
    /// Residual mean is `mean_scale` times the raw network output.
    pub mean_scale: f64,
    /// Radians per unit output of the feedback path.
    pub feedback_gain: f64,
    pub residual_limit: f64,
    pub obs: ObsConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: [128, 128],
            use_residual: true,
            init_log_std: -3.0,
            out_gain: 0.01,
            mean_scale: 0.02,
            feedback_gain: 3.0,
            residual_limit: 0.1,
            obs: ObsConfig::default(),
        }
    }
}

/// Shared-trunk actor-critic with a state-independent residual log-std.
///
/// The residual mean also has a direct linear path from the skill feedback
/// block at the end of the observation, in radians, so the shape dependent
/// offset does not have to be carried through the trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerPolicy {
    pub config: PolicyConfig,
    pub mlp: Mlp,
    pub feedback: Linear,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerAction {
    pub command: SkillCommand,
    pub axis_index: usize,
    /// Gaussian sample before clipping; the log-prob refers to this value.
    pub raw_residual: [f64; NUM_JOINTS],
    pub log_prob: f64,
    pub value: f64,
}

impl PlannerPolicy {
    pub fn new<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Self {
        let mlp = Mlp::init(
            "planner",
            config.obs.dim(),
            (config.hidden[0], config.hidden[1]),
            POLICY_OUT,
            config.out_gain,
            rng,
        );
        let feedback = Linear::zeros("planner.feedback", FEEDBACK_DIM, NUM_JOINTS);
        PlannerPolicy { config, mlp, feedback, log_std: vec![config.init_log_std; NUM_JOINTS] }
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn feedback_block<'a>(obs: &'a ArrayView2<f64>) -> ArrayView2<'a, f64> {
        obs.slice(s![.., obs.ncols() - FEEDBACK_DIM..])
    }

    /// Adds the feedback path to the mean columns, pre-divided by
    /// `mean_scale` so that [`PlannerPolicy::residual_mean`] stays a plain
    /// scaling of the output row.
    fn add_feedback(&self, obs: &ArrayView2<f64>, out: &mut Array2<f64>) -> Result<()> {
        let fb = self.feedback.forward(Self::feedback_block(obs))?;
        let mut cols = out.slice_mut(s![.., MEAN_OFF..VALUE_OFF]);
        cols.scaled_add(self.config.feedback_gain / self.config.mean_scale, &fb);
        Ok(())
    }

    pub fn forward(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let (mut out, cache) = self.mlp.forward(obs)?;
        self.add_feedback(&obs, &mut out)?;
        Ok((out, cache))
    }

    pub fn predict(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = self.mlp.predict(obs)?;
        self.add_feedback(&obs, &mut out)?;
        Ok(out)
    }

    /// Accumulates parameter gradients for `dL/d out` into `g`.
    pub fn backward(&self, obs: ArrayView2<f64>, cache: &MlpCache, dout: ArrayView2<f64>, g: &mut PlannerPolicy) {
        self.mlp.backward(cache, dout, &mut g.mlp);
        let dfb = dout.slice(s![.., MEAN_OFF..VALUE_OFF]).mapv(|v| v * self.config.feedback_gain / self.config.mean_scale);
        self.feedback.backward_params(Self::feedback_block(&obs), dfb.view(), &mut g.feedback);
    }

    /// Residual means of one output row.
    pub fn residual_mean(&self, out: &[f64]) -> [f64; NUM_JOINTS] {
        std::array::from_fn(|j| self.config.mean_scale * out[MEAN_OFF + j])
    }

    /// Joint log-probability of an (axis, raw residual) pair under one output
    /// row.
    pub fn log_prob(&self, out: ArrayView1<f64>, axis: usize, raw: &[f64]) -> Result<f64> {
        let out = out.as_slice().ok_or_else(|| Error::InvalidInput("non-contiguous policy output".into()))?;
        let lp = log_softmax(&out[..ACTION_DIM])?;
        let mut total = lp[axis];
        if self.config.use_residual {
            total += gaussian_log_prob(raw, &self.residual_mean(out), &self.log_std);
        }
        Ok(total)
    }

    /// Turns one output row into a command. `deterministic` takes the most
    /// likely axis and the mean residual.
    pub fn act<R: Rng + ?Sized>(&self, out: ArrayView1<f64>, rng: &mut R, deterministic: bool) -> Result<PlannerAction> {
        let out = out.to_vec();
        if out.len() != POLICY_OUT {
            return Err(Error::dims("policy output", POLICY_OUT, out.len()));
        }
        let logits = &out[..ACTION_DIM];
        let (axis_index, mut log_prob) = if deterministic {
            let lp = log_softmax(logits)?;
            let i = (0..ACTION_DIM).fold(0, |b, i| if lp[i] > lp[b] { i } else { b });
            (i, lp[i])
        } else {
            let s = categorical_head(logits, rng)?;
            (s.index, s.log_prob)
        };
        let mut raw_residual = [0.0; NUM_JOINTS];
        if self.config.use_residual {
            let mean = self.residual_mean(&out);
            if deterministic {
                raw_residual = mean;
                log_prob += gaussian_log_prob(&mean, &mean, &self.log_std);
            } else {
                let g = gaussian_head(&mean, &self.log_std, rng)?;
                raw_residual.copy_from_slice(&g.action);
                log_prob += g.log_prob;
            }
        }
        let lim = self.config.residual_limit;
        let clipped: Vec<f64> = raw_residual.iter().map(|v| v.clamp(-lim, lim)).collect();
        let command = SkillCommand::with_residual(RotationAxis::from_index(axis_index)?, &clipped)?;
        Ok(PlannerAction { command, axis_index, raw_residual, log_prob, value: out[VALUE_OFF] })
    }

    /// Single-observation forward pass plus sampling.
    pub fn planner_forward<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PlannerAction> {
        if obs.len() != self.obs_dim() {
            return Err(Error::dims("planner observation", self.obs_dim(), obs.len()));
        }
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let y = self.predict(x)?;
        self.act(y.row(0), rng, false)
    }
}

impl Module for PlannerPolicy {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v = self.mlp.params();
        v.extend(self.feedback.params());
        v.push(ParamView { name: "planner.log_std".into(), shape: vec![NUM_JOINTS], data: &self.log_std });
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.mlp.params_mut();
        v.extend(self.feedback.params_mut());
        v.push(&mut self.log_std);
        v
    }
}

pub(crate) fn split_output(out: &[f64]) -> (&[f64], &[f64], f64) {
    (&out[..ACTION_DIM], &out[MEAN_OFF..VALUE_OFF], out[VALUE_OFF])
}
