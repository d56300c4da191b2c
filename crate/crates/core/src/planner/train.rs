use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::obs::{assemble_observation_into, PlannerHistory};
use super::policy::{PlannerPolicy, PolicyConfig};
use super::ppo::{ppo_update, PpoConfig, RolloutBuffer};
use crate::env::{BatchEnv, Env, EnvConfig, SkillCommand};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Checkpoint};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub num_envs: usize,
    pub rollout_steps: usize,
    /// Iterations averaged when picking the best checkpoint.
    pub best_window: usize,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 300,
            num_envs: 64,
            rollout_steps: 128,
            best_window: 5,
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub agent_steps: u64,
    pub success_rate: f64,
    pub episodes: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_policy: PlannerPolicy,
    pub best_policy: PlannerPolicy,
    pub curve: Vec<CurveRow>,
}

pub fn save_policy(policy: &PlannerPolicy, seed: u64, path: &Path) -> Result<()> {
    let meta = serde_json::json!({ "policy": policy.config });
    Checkpoint::from_module("planner", seed, meta, policy).save(path)
}

pub fn load_policy(path: &Path) -> Result<PlannerPolicy> {
    let ck = Checkpoint::load(path)?;
    if ck.kind != "planner" {
        return Err(Error::Incompatible(format!("expected a planner checkpoint, found `{}`", ck.kind)));
    }
    let cfg: PolicyConfig = serde_json::from_value(ck.meta["policy"].clone())
        .map_err(|e| Error::Incompatible(format!("planner config: {e}")))?;
    let mut p = PlannerPolicy::new(cfg, &mut seeds::rng(0, 0, 0));
    ck.load_into(&mut p)?;
    Ok(p)
}

fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// PPO training on batched environments. Writes `curve.csv`,
/// `planner_best.json` and `planner_final.json` when `out_dir` is given.
pub fn train_planner(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.env.validate()?;
    if cfg.num_envs == 0 || cfg.rollout_steps == 0 {
        return Err(Error::InvalidInput("num_envs and rollout_steps must be positive".into()));
    }
    let mut pcfg = cfg.policy;
    pcfg.residual_limit = cfg.env.residual_limit;
    let mut policy = PlannerPolicy::new(pcfg, &mut seeds::rng(cfg.seed, seeds::TAG_POLICY_INIT, 0));
    let mut opt = Adam::new(AdamConfig { lr: cfg.ppo.lr, ..AdamConfig::default() }, &policy);
    let env_cfg = Arc::new(cfg.env.clone());
    let n = cfg.num_envs;
    let mut batch = BatchEnv::new(env_cfg.clone(), seeds::derive(cfg.seed, seeds::TAG_TRAIN_ENV, 0), n)?;
    let mut act_rngs: Vec<_> = (0..n as u64).map(|i| seeds::rng(cfg.seed, seeds::TAG_TRAIN_ACT, i)).collect();
    let mut shuffle_rng = seeds::rng(cfg.seed, seeds::TAG_SHUFFLE, 0);
    let obs_cfg = pcfg.obs;
    let dim = obs_cfg.dim();
    let mut histories: Vec<PlannerHistory> = batch
        .envs
        .iter_mut()
        .map(|e| {
            let mut h = PlannerHistory::new(obs_cfg.history, env_cfg.palm_center);
            h.reset(e.observe());
            h
        })
        .collect();
    let mut buf = RolloutBuffer::new(dim, n, cfg.rollout_steps);
    let mut obs = Array2::<f64>::zeros((n, dim));
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut best = policy.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut agent_steps = 0u64;

    for it in 0..cfg.iterations {
        if cfg.ppo.anneal_lr {
            opt.config.lr = cfg.ppo.lr * (1.0 - it as f64 / cfg.iterations as f64);
        }
        buf.clear();
        let (mut successes, mut episodes, mut reward_sum) = (0usize, 0usize, 0.0);
        for _ in 0..cfg.rollout_steps {
            fill_obs(&batch.envs, &histories, &obs_cfg, &mut obs)?;
            let out = policy.predict(obs.view())?;
            let mut actions = Vec::with_capacity(n);
            for (i, rng) in act_rngs.iter_mut().enumerate() {
                actions.push(policy.act(out.row(i), rng, false)?);
            }
            let cmds: Vec<SkillCommand> = actions.iter().map(|a| a.command.clone()).collect();
            let results = batch.step(&cmds)?;
            for (i, (a, r)) in actions.iter().zip(results.iter()).enumerate() {
                if !r.reward.is_finite() {
                    return Err(diverged(out_dir, &policy, cfg.seed, format!("non-finite reward at iteration {it}")));
                }
                reward_sum += r.reward;
                let row = obs.row(i);
                buf.push(
                    row.as_slice().expect("contiguous"),
                    a.axis_index,
                    &a.raw_residual,
                    a.log_prob,
                    a.value,
                    r.reward * cfg.ppo.reward_scale,
                    r.done,
                )?;
                histories[i].push_action(a.command.axis);
                let env = &mut batch.envs[i];
                if r.done {
                    episodes += 1;
                    successes += r.info.success as usize;
                    env.reset();
                    histories[i].reset(env.observe());
                } else {
                    histories[i].push_pose(env.observe());
                }
            }
        }
        fill_obs(&batch.envs, &histories, &obs_cfg, &mut obs)?;
        let out = policy.predict(obs.view())?;
        for i in 0..n {
            buf.last_values[i] = out[[i, super::POLICY_OUT - 1]];
        }
        let stats = ppo_update(&mut policy, &mut opt, &buf, &cfg.ppo, &mut shuffle_rng)
            .map_err(|e| diverged(out_dir, &policy, cfg.seed, format!("iteration {it}: {e}")))?;
        agent_steps += (n * cfg.rollout_steps) as u64;
        let success_rate = if episodes > 0 { successes as f64 / episodes as f64 } else { 0.0 };
        if success_rate.is_nan() {
            return Err(diverged(out_dir, &policy, cfg.seed, format!("NaN success rate at iteration {it}")));
        }
        curve.push(CurveRow {
            iteration: it,
            agent_steps,
            success_rate,
            episodes,
            mean_reward: reward_sum / (n * cfg.rollout_steps) as f64,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
        });
        let w = cfg.best_window.max(1).min(curve.len());
        let score = curve[curve.len() - w..].iter().map(|r| r.success_rate).sum::<f64>() / w as f64;
        if score > best_score {
            best_score = score;
            best = policy.clone();
        }
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_curve(&dir.join("curve.csv"), &curve)?;
        save_policy(&best, cfg.seed, &dir.join("planner_best.json"))?;
        save_policy(&policy, cfg.seed, &dir.join("planner_final.json"))?;
    }
    Ok(TrainOutcome { final_policy: policy, best_policy: best, curve })
}

fn fill_obs(envs: &[Env], histories: &[PlannerHistory], cfg: &super::ObsConfig, obs: &mut Array2<f64>) -> Result<()> {
    for (i, (e, h)) in envs.iter().zip(histories.iter()).enumerate() {
        let mut row = obs.row_mut(i);
        let s = e.state();
        assemble_observation_into(cfg, h, &s.goal, &s.feedback, row.as_slice_mut().expect("contiguous"))?;
    }
    Ok(())
}

fn diverged(out_dir: Option<&Path>, policy: &PlannerPolicy, seed: u64, msg: String) -> Error {
    if let Some(dir) = out_dir {
        let _ = std::fs::create_dir_all(dir);
        let _ = save_policy(policy, seed, &dir.join("planner_diverged.json"));
    }
    Error::Diverged(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            iterations: 2,
            num_envs: 4,
            rollout_steps: 16,
            policy: PolicyConfig { hidden: [16, 16], ..PolicyConfig::default() },
            ppo: PpoConfig { minibatches: 2, epochs: 1, ..PpoConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn curve_is_reproducible() {
        let a = train_planner(&tiny(), None).unwrap();
        let b = train_planner(&tiny(), None).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.final_policy, b.final_policy);
        assert_eq!(a.curve.len(), 2);
        assert_eq!(a.curve[1].agent_steps, 128);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let out = train_planner(&tiny(), Some(dir.path())).unwrap();
        let back = load_policy(&dir.path().join("planner_final.json")).unwrap();
        assert_eq!(back, out.final_policy);
        assert!(dir.path().join("curve.csv").exists());
    }
}
