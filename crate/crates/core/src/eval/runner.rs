//! Lock-step episode runner. Every episode owns its environment and action
//! streams (derived from `(seed, episode index)`), so outcomes do not depend
//! on chunking or thread count, and different controllers see matched
//! episodes.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::controller::{ControlInput, Controller};
use crate::env::{Env, EnvConfig, ObservedPose, SkillCommand, StepResult, TrajectoryStep};
use crate::error::Result;
use crate::estimator::{Estimator, EstimatorTracker};
use crate::planner::PlannerHistory;
use crate::seeds;
use crate::so3::{geodesic_distance, norm3, sub3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: u64,
    pub success: bool,
    pub dropped: bool,
    pub false_stop: bool,
    pub timeout: bool,
    pub length: usize,
    pub total_reward: f64,
    pub slips: usize,
    pub final_distance: f64,
    /// Estimator rotation / position error per step (stage 2 only).
    pub est_rot_err: Vec<f64>,
    pub est_pos_err: Vec<f64>,
    #[serde(skip)]
    pub trajectory: Option<Vec<TrajectoryStep>>,
}

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    /// Stage 2 when set: the planner sees the estimator's integrated pose.
    pub estimator: Option<&'a Estimator>,
    pub record: bool,
    /// Episodes stepped together.
    pub chunk: usize,
    /// Replace the sampled goal with the initial orientation.
    pub goal_at_start: bool,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions { estimator: None, record: false, chunk: 64, goal_at_start: false }
    }
}

struct Slot {
    env: Env,
    rng: ChaCha8Rng,
    history: PlannerHistory,
    tracker: Option<EstimatorTracker>,
    result: EpisodeResult,
    traj: Vec<TrajectoryStep>,
}

impl Slot {
    fn pose(&mut self) -> ObservedPose {
        match &self.tracker {
            Some(t) => t.world_pose(),
            None => self.env.observe(),
        }
    }
}

pub fn run_episodes(
    controller: &dyn Controller,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    opts: RunOptions<'_>,
) -> Result<Vec<EpisodeResult>> {
    env_cfg.validate()?;
    let cfg = Arc::new(env_cfg.clone());
    let chunk = opts.chunk.max(1);
    let mut results = Vec::with_capacity(episodes);
    let mut start = 0;
    while start < episodes {
        let end = (start + chunk).min(episodes);
        let mut slots: Vec<Slot> = (start..end)
            .map(|ep| -> Result<Slot> {
                let ep = ep as u64;
                let mut env = Env::new(cfg.clone(), seeds::derive(seed, seeds::TAG_EVAL_ENV, ep))?;
                if opts.goal_at_start {
                    let q = env.state().object.q;
                    env.set_goal(q);
                }
                let tracker = opts.estimator.map(|e| e.tracker(env.state()));
                let mut slot = Slot {
                    rng: seeds::rng(seed, seeds::TAG_EVAL_ACT, ep),
                    history: PlannerHistory::new(controller.history_len(), cfg.palm_center),
                    tracker,
                    result: EpisodeResult {
                        episode: ep,
                        success: false,
                        dropped: false,
                        false_stop: false,
                        timeout: false,
                        length: 0,
                        total_reward: 0.0,
                        slips: 0,
                        final_distance: 0.0,
                        est_rot_err: Vec::new(),
                        est_pos_err: Vec::new(),
                        trajectory: None,
                    },
                    traj: Vec::new(),
                    env,
                };
                let first = slot.pose();
                slot.history.reset(first);
                Ok(slot)
            })
            .collect::<Result<_>>()?;

        loop {
            let live: Vec<usize> = (0..slots.len()).filter(|&i| !slots[i].env.state().done).collect();
            if live.is_empty() {
                break;
            }
            let cmds = {
                let inputs: Vec<ControlInput<'_>> = live
                    .iter()
                    .map(|&i| {
                        let s = &slots[i];
                        ControlInput { history: &s.history, goal: s.env.state().goal, z: s.env.state().feedback }
                    })
                    .collect();
                let mut rngs: Vec<ChaCha8Rng> = live.iter().map(|&i| slots[i].rng.clone()).collect();
                let mut refs: Vec<&mut ChaCha8Rng> = rngs.iter_mut().collect();
                let cmds = controller.act_batch(&inputs, &mut refs)?;
                drop(inputs);
                for (k, &i) in live.iter().enumerate() {
                    slots[i].rng = rngs[k].clone();
                }
                cmds
            };
            let mut cmd_of: Vec<Option<SkillCommand>> = vec![None; slots.len()];
            for (k, &i) in live.iter().enumerate() {
                cmd_of[i] = Some(cmds[k].clone());
            }
            let stepped: Vec<Option<StepResult>> = slots
                .par_iter_mut()
                .zip(cmd_of.par_iter())
                .map(|(s, c)| match c {
                    Some(c) => s.env.step(c).map(Some),
                    None => Ok(None),
                })
                .collect::<Result<_>>()?;

            if let Some(est) = opts.estimator {
                let mut trackers: Vec<&mut EstimatorTracker> = Vec::new();
                for (s, r) in slots.iter_mut().zip(stepped.iter()) {
                    if let (Some(r), Some(t)) = (r, s.tracker.as_mut()) {
                        t.push_observation(&r.info.hand, &r.info.z);
                        trackers.push(t);
                    }
                }
                est.advance(&mut trackers)?;
            }

            for (i, r) in stepped.into_iter().enumerate() {
                let Some(r) = r else { continue };
                let s = &mut slots[i];
                let cmd = cmd_of[i].take().expect("command for stepped slot");
                s.result.length += 1;
                s.result.total_reward += r.reward;
                s.result.slips += r.info.slip as usize;
                s.result.final_distance = r.info.distance;
                if let Some(t) = &s.tracker {
                    let est = t.world_pose();
                    s.result.est_rot_err.push(geodesic_distance(&est.q, &r.info.object.q));
                    s.result.est_pos_err.push(norm3(&sub3(&est.p, &r.info.object.p)));
                }
                if opts.record {
                    let goal = s.env.state().goal;
                    s.traj.push(TrajectoryStep::from_result(s.result.episode, goal, &cmd, &r));
                }
                s.history.push_action(cmd.axis);
                if r.done {
                    s.result.success = r.info.success;
                    s.result.dropped = r.info.dropped;
                    s.result.false_stop = r.info.false_stop;
                    s.result.timeout = r.info.timeout;
                } else {
                    let pose = s.pose();
                    s.history.push_pose(pose);
                }
            }
        }
        for mut s in slots {
            if opts.record {
                s.result.trajectory = Some(std::mem::take(&mut s.traj));
            }
            results.push(s.result);
        }
        start = end;
    }
    Ok(results)
}
