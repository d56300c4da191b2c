//! Rollout storage, GAE and the clipped PPO update with hand-written
//! gradients of the surrogate.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::obs::ACTION_DIM;
use super::policy::{split_output, PlannerPolicy, POLICY_OUT};
use crate::env::NUM_JOINTS;
use crate::error::{Error, Result};
use crate::nn::{
    categorical_entropy, clip_grad_norm, entropy_grad, gaussian_log_prob, gaussian_log_prob_grad, log_softmax,
    log_softmax_grad, Adam, Module,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    /// Decay the learning rate linearly to zero over training.
    pub anneal_lr: bool,
    /// Rewards are multiplied by this before advantage estimation.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 8,
            entropy_coef: 0.003,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            lr: 3e-4,
            anneal_lr: true,
            reward_scale: 0.01,
        }
    }
}

/// Time-major storage: row `t * num_envs + n`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub steps: usize,
    pub obs: Array2<f64>,
    pub axes: Vec<usize>,
    pub raw_residuals: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value estimates for the state after the last stored step.
    pub last_values: Vec<f64>,
    len: usize,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, num_envs: usize, steps: usize) -> Self {
        let cap = num_envs * steps;
        RolloutBuffer {
            num_envs,
            steps,
            obs: Array2::zeros((cap, obs_dim)),
            axes: vec![0; cap],
            raw_residuals: Array2::zeros((cap, NUM_JOINTS)),
            log_probs: vec![0.0; cap],
            values: vec![0.0; cap],
            rewards: vec![0.0; cap],
            dones: vec![false; cap],
            last_values: vec![0.0; num_envs],
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: &[f64],
        axis: usize,
        raw_residual: &[f64; NUM_JOINTS],
        log_prob: f64,
        value: f64,
        reward: f64,
        done: bool,
    ) -> Result<()> {
        if self.is_full() {
            return Err(Error::InvalidInput("rollout buffer is full".into()));
        }
        let i = self.len;
        self.obs.row_mut(i).assign(&ndarray::ArrayView1::from(obs));
        self.axes[i] = axis;
        self.raw_residuals.row_mut(i).assign(&ndarray::ArrayView1::from(&raw_residual[..]));
        self.log_probs[i] = log_prob;
        self.values[i] = value;
        self.rewards[i] = reward;
        self.dones[i] = done;
        self.len += 1;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }
}

/// GAE over a time-major buffer; returns raw advantages and value targets.
/// Nothing is bootstrapped across a done flag.
pub fn gae_advantages(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buf.num_envs;
    let t_len = buf.len / n;
    let mut adv = vec![0.0; t_len * n];
    for e in 0..n {
        let mut gae = 0.0;
        for t in (0..t_len).rev() {
            let i = t * n + e;
            let next_v = if t + 1 == t_len { buf.last_values[e] } else { buf.values[i + n] };
            let live = if buf.dones[i] { 0.0 } else { 1.0 };
            let delta = buf.rewards[i] + gamma * next_v * live - buf.values[i];
            gae = delta + gamma * lambda * live * gae;
            adv[i] = gae;
        }
    }
    let ret = adv.iter().zip(buf.values.iter()).map(|(a, v)| a + v).collect();
    (adv, ret)
}

pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// One PPO minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub axes: &'a [usize],
    pub raw_residuals: ArrayView2<'a, f64>,
    pub old_log_probs: &'a [f64],
    pub old_values: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

/// Clipped surrogate + clipped value loss − entropy bonus. Accumulates the
/// gradient into `grads` when given.
pub fn ppo_loss(
    policy: &PlannerPolicy,
    mb: &Minibatch<'_>,
    cfg: &PpoConfig,
    grads: Option<&mut PlannerPolicy>,
) -> Result<LossParts> {
    let m = mb.axes.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    let (out, cache) = policy.forward(mb.obs)?;
    let mut dout = Array2::<f64>::zeros((m, POLICY_OUT));
    let mut dlog_std = vec![0.0; NUM_JOINTS];
    let inv_m = 1.0 / m as f64;
    let use_res = policy.config.use_residual;
    let mut parts = LossParts::default();
    for i in 0..m {
        let row = out.row(i);
        let row = row.as_slice().ok_or_else(|| Error::InvalidInput("non-contiguous output".into()))?;
        let (logits, _, value) = split_output(row);
        let mean = policy.residual_mean(row);
        let lp = log_softmax(logits)?;
        let a = mb.axes[i];
        let raw = mb.raw_residuals.row(i);
        let raw = raw.as_slice().ok_or_else(|| Error::InvalidInput("non-contiguous residuals".into()))?;
        let mut logp = lp[a];
        if use_res {
            logp += gaussian_log_prob(raw, &mean, &policy.log_std);
        }
        let log_ratio = logp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let (s1, s2) = (ratio * adv, clipped * adv);
        parts.policy -= s1.min(s2) * inv_m;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;
        if (ratio - 1.0).abs() > cfg.clip {
            parts.clip_frac += inv_m;
        }
        // d(-min)/dlogp is -adv·ratio on the unclipped branch, 0 otherwise
        let g_logp = if s1 <= s2 { -adv * ratio * inv_m } else { 0.0 };

        let h = categorical_entropy(&lp);
        parts.entropy += h * inv_m;

        let ret = mb.returns[i];
        let v_old = mb.old_values[i];
        let v_clip = v_old + (value - v_old).clamp(-cfg.clip, cfg.clip);
        let (e1, e2) = ((value - ret).powi(2), (v_clip - ret).powi(2));
        parts.value += 0.5 * e1.max(e2) * inv_m;
        let g_value = if e1 >= e2 {
            value - ret
        } else if (value - v_old).abs() < cfg.clip {
            v_clip - ret
        } else {
            0.0
        };

        let mut d = dout.row_mut(i);
        let (dlp, dh) = (log_softmax_grad(&lp, a), entropy_grad(&lp));
        for k in 0..ACTION_DIM {
            d[k] = g_logp * dlp[k] - cfg.entropy_coef * inv_m * dh[k];
        }
        if use_res {
            let (dmean, dls) = gaussian_log_prob_grad(raw, &mean, &policy.log_std);
            for j in 0..NUM_JOINTS {
                d[ACTION_DIM + j] = g_logp * dmean[j] * policy.config.mean_scale;
                dlog_std[j] += g_logp * dls[j];
            }
        }
        d[POLICY_OUT - 1] = cfg.value_coef * g_value * inv_m;
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    if !parts.total.is_finite() {
        return Err(Error::Diverged(format!("non-finite ppo loss: {parts:?}")));
    }
    if let Some(g) = grads {
        policy.backward(mb.obs, &cache, dout.view(), g);
        g.log_std.iter_mut().zip(dlog_std.iter()).for_each(|(a, b)| *a += b);
    }
    Ok(parts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
}

/// Runs `epochs` passes of shuffled minibatch updates over a full buffer.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PlannerPolicy,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    if !buf.is_full() {
        return Err(Error::InvalidInput(format!("ppo_update needs a full buffer ({}/{})", buf.len(), buf.capacity())));
    }
    let (mut adv, ret) = gae_advantages(buf, cfg.gamma, cfg.lambda);
    normalize(&mut adv);
    let n = buf.len();
    let mb_size = (n / cfg.minibatches.max(1)).max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(mb_size) {
            let obs = buf.obs.select(Axis(0), chunk);
            let raw = buf.raw_residuals.select(Axis(0), chunk);
            let pick = |v: &[f64]| chunk.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let axes: Vec<usize> = chunk.iter().map(|&i| buf.axes[i]).collect();
            let (olp, ov, a, r) = (pick(&buf.log_probs), pick(&buf.values), pick(&adv), pick(&ret));
            let mb = Minibatch {
                obs: obs.view(),
                axes: &axes,
                raw_residuals: raw.view(),
                old_log_probs: &olp,
                old_values: &ov,
                advantages: &a,
                returns: &r,
            };
            let mut g = policy.zeroed();
            let parts = ppo_loss(policy, &mb, cfg, Some(&mut g))?;
            g.check_finite("ppo gradients").map_err(|e| Error::Diverged(format!("{e}; loss {parts:?}")))?;
            let norm = clip_grad_norm(&mut g, cfg.max_grad_norm);
            opt.step(policy, &g)?;
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_frac += parts.clip_frac;
            stats.grad_norm += norm;
            count += 1.0;
        }
    }
    for v in [
        &mut stats.policy_loss,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.approx_kl,
        &mut stats.clip_frac,
        &mut stats.grad_norm,
    ] {
        *v /= count;
    }
    policy.check_finite("planner parameters").map_err(|e| Error::Diverged(e.to_string()))?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use crate::planner::policy::PolicyConfig;
    use crate::planner::ObsConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn small_policy(seed: u64) -> PlannerPolicy {
        let cfg = PolicyConfig {
            hidden: [6, 5],
            obs: ObsConfig { history: 1, ..ObsConfig::default() },
            init_log_std: -1.0,
            out_gain: 0.5,
            ..PolicyConfig::default()
        };
        PlannerPolicy::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn buf_of(rewards: &[f64], values: &[f64], dones: &[bool], last: f64) -> RolloutBuffer {
        let mut b = RolloutBuffer::new(1, 1, rewards.len());
        for i in 0..rewards.len() {
            b.push(&[0.0], 0, &[0.0; NUM_JOINTS], 0.0, values[i], rewards[i], dones[i]).unwrap();
        }
        b.last_values[0] = last;
        b
    }

    #[test]
    fn one_step_terminal() {
        let (a, r) = gae_advantages(&buf_of(&[2.0], &[0.5], &[true], 9.0), 0.99, 0.95);
        assert!((a[0] - 1.5).abs() < 1e-15);
        assert!((r[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rewards_zero_values() {
        let (a, _) = gae_advantages(&buf_of(&[0.0; 5], &[0.0; 5], &[false, false, true, false, false], 0.0), 0.99, 0.95);
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_step_hand_unrolled() {
        let (g, l) = (0.99, 0.95);
        let (r0, r1, v0, v1) = (1.0, 3.0, 0.4, 0.7);
        let (a, _) = gae_advantages(&buf_of(&[r0, r1], &[v0, v1], &[false, true], 5.0), g, l);
        let d1 = r1 - v1;
        let d0 = r0 + g * v1 - v0;
        assert!((a[1] - d1).abs() < 1e-15);
        assert!((a[0] - (d0 + g * l * d1)).abs() < 1e-15);
        // bootstrapped tail when the segment is cut mid-episode
        let (a, _) = gae_advantages(&buf_of(&[r0, r1], &[v0, v1], &[false, false], 5.0), g, l);
        let d1 = r1 + g * 5.0 - v1;
        assert!((a[1] - d1).abs() < 1e-15);
        assert!((a[0] - (d0 + g * l * d1)).abs() < 1e-15);
    }

    #[test]
    fn interleaved_envs_do_not_mix() {
        let mut b = RolloutBuffer::new(1, 2, 2);
        // t=0: env0 r=1, env1 r=10; t=1: env0 r=2 done, env1 r=20 done
        for (r, v, d) in [(1.0, 0.0, false), (10.0, 0.0, false), (2.0, 0.0, true), (20.0, 0.0, true)] {
            b.push(&[0.0], 0, &[0.0; NUM_JOINTS], 0.0, v, r, d).unwrap();
        }
        let (a, _) = gae_advantages(&b, 0.5, 1.0);
        assert_eq!(a, vec![1.0 + 0.5 * 2.0, 10.0 + 0.5 * 20.0, 2.0, 20.0]);
    }

    struct Batch {
        obs: Array2<f64>,
        axes: Vec<usize>,
        raw: Array2<f64>,
        olp: Vec<f64>,
        ov: Vec<f64>,
        adv: Vec<f64>,
        ret: Vec<f64>,
    }

    impl Batch {
        fn mb(&self) -> Minibatch<'_> {
            Minibatch {
                obs: self.obs.view(),
                axes: &self.axes,
                raw_residuals: self.raw.view(),
                old_log_probs: &self.olp,
                old_values: &self.ov,
                advantages: &self.adv,
                returns: &self.ret,
            }
        }
    }

    fn random_batch(p: &PlannerPolicy, m: usize, seed: u64, perturb: f64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = p.obs_dim();
        let obs = Array2::from_shape_fn((m, d), |_| rng.sample::<f64, _>(StandardNormal));
        let out = p.predict(obs.view()).unwrap();
        let mut axes = Vec::new();
        let mut raw = Array2::zeros((m, NUM_JOINTS));
        let mut olp = Vec::new();
        let mut ov = Vec::new();
        for i in 0..m {
            let a = p.act(out.row(i), &mut rng, false).unwrap();
            axes.push(a.axis_index);
            raw.row_mut(i).assign(&ndarray::ArrayView1::from(&a.raw_residual[..]));
            olp.push(a.log_prob + perturb * rng.sample::<f64, _>(StandardNormal));
            ov.push(a.value + perturb * rng.sample::<f64, _>(StandardNormal));
        }
        let adv = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let ret = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        Batch { obs, axes, raw, olp, ov, adv, ret }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for inst in 0..20 {
            let p = small_policy(inst);
            let b = random_batch(&p, 6, 100 + inst, 0.15);
            let cfg = PpoConfig { clip: 0.2, ..PpoConfig::default() };
            let mut g = p.zeroed();
            ppo_loss(&p, &b.mb(), &cfg, Some(&mut g)).unwrap();
            let flat = p.flat();
            let ga = g.flat();
            let h = 1e-6;
            let mut q = p.clone();
            for k in (0..flat.len()).step_by(7) {
                let mut x = flat.clone();
                x[k] += h;
                q.set_flat(&x).unwrap();
                let lp = ppo_loss(&q, &b.mb(), &cfg, None).unwrap().total;
                x[k] -= 2.0 * h;
                q.set_flat(&x).unwrap();
                let lm = ppo_loss(&q, &b.mb(), &cfg, None).unwrap().total;
                let fd = (lp - lm) / (2.0 * h);
                let err = (fd - ga[k]).abs() / (fd.abs().max(ga[k].abs()).max(1e-4));
                assert!(err < 1e-4, "inst {inst} param {k}: fd {fd} analytic {}", ga[k]);
            }
        }
    }

    #[test]
    fn feedback_path_gradient_matches_finite_differences() {
        let mut p = small_policy(5);
        p.config.feedback_gain = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        p.feedback.w.mapv_inplace(|_| 0.02 * rng.sample::<f64, _>(StandardNormal));
        let b = random_batch(&p, 6, 9, 0.1);
        let cfg = PpoConfig::default();
        let mut g = p.zeroed();
        ppo_loss(&p, &b.mb(), &cfg, Some(&mut g)).unwrap();
        for k in 0..p.feedback.w.len() {
            let mut q = p.clone();
            let (i, j) = (k / NUM_JOINTS, k % NUM_JOINTS);
            q.feedback.w[[i, j]] += 1e-6;
            let lp = ppo_loss(&q, &b.mb(), &cfg, None).unwrap().total;
            q.feedback.w[[i, j]] -= 2e-6;
            let lm = ppo_loss(&q, &b.mb(), &cfg, None).unwrap().total;
            let fd = (lp - lm) / 2e-6;
            let ga = g.feedback.w[[i, j]];
            assert!((fd - ga).abs() < 1e-6 * fd.abs().max(1.0), "w[{i},{j}]: fd {fd} analytic {ga}");
        }
    }

    #[test]
    fn surrogate_matches_hand_computation() {
        // three samples with known ratios: 1.5 (A>0, clipped), 0.5 (A<0,
        // clipped), 1.1 (A>0, inside)
        let p = small_policy(7);
        let mut b = random_batch(&p, 3, 1, 0.0);
        let out = p.predict(b.obs.view()).unwrap();
        let logp: Vec<f64> = (0..3).map(|i| p.log_prob(out.row(i), b.axes[i], b.raw.row(i).as_slice().unwrap()).unwrap()).collect();
        let ratios = [1.5f64, 0.5, 1.1];
        b.olp = (0..3).map(|i| logp[i] - ratios[i].ln()).collect();
        b.adv = vec![2.0, -1.0, 0.5];
        let cfg = PpoConfig { value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
        let parts = ppo_loss(&p, &b.mb(), &cfg, None).unwrap();
        let expected = -(f64::min(1.5 * 2.0, 1.2 * 2.0) + f64::min(0.5 * -1.0, 0.8 * -1.0) + 1.1 * 0.5) / 3.0;
        assert!((parts.policy - expected).abs() < 1e-12, "{} vs {expected}", parts.policy);
        assert!((parts.total - expected).abs() < 1e-12);
        assert!((parts.clip_frac - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_leaves_only_entropy_gradient() {
        let p = small_policy(3);
        let mut b = random_batch(&p, 8, 2, 0.0);
        b.adv = vec![0.0; 8];
        let cfg = PpoConfig { value_coef: 0.0, ..PpoConfig::default() };
        let mut g = p.zeroed();
        ppo_loss(&p, &b.mb(), &cfg, Some(&mut g)).unwrap();
        // residual means and log_std only see the policy term
        assert!(g.log_std.iter().all(|v| *v == 0.0));
        let mean_cols = g.mlp.l3.w.slice(ndarray::s![.., 7..23]).to_owned();
        assert!(mean_cols.iter().all(|v| *v == 0.0));
        assert!(g.feedback.w.iter().chain(&g.feedback.b).all(|v| *v == 0.0));
        let logit_cols = g.mlp.l3.w.slice(ndarray::s![.., 0..7]).to_owned();
        assert!(logit_cols.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn unclipped_equals_vanilla_policy_gradient() {
        // At ratio 1 with infinite clip, ∇L = -mean(A ∇log π); compare with
        // central differences of -mean(A log π).
        let p = small_policy(11);
        let b = random_batch(&p, 10, 3, 0.0);
        let cfg = PpoConfig { clip: f64::INFINITY, epochs: 1, value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
        let mut g = p.zeroed();
        ppo_loss(&p, &b.mb(), &cfg, Some(&mut g)).unwrap();
        let pg = |q: &PlannerPolicy| {
            let out = q.predict(b.obs.view()).unwrap();
            -(0..10)
                .map(|i| b.adv[i] * q.log_prob(out.row(i), b.axes[i], b.raw.row(i).as_slice().unwrap()).unwrap())
                .sum::<f64>()
                / 10.0
        };
        let flat = p.flat();
        let ga = g.flat();
        let mut q = p.clone();
        for k in (0..flat.len()).step_by(5) {
            let mut x = flat.clone();
            x[k] += 1e-6;
            q.set_flat(&x).unwrap();
            let lp = pg(&q);
            x[k] -= 2e-6;
            q.set_flat(&x).unwrap();
            let lm = pg(&q);
            let fd = (lp - lm) / 2e-6;
            assert!((fd - ga[k]).abs() < 1e-9 + 1e-6 * fd.abs(), "param {k}: {fd} vs {}", ga[k]);
        }
    }

    #[test]
    fn update_rejects_partial_buffer_and_runs_on_full() {
        let mut p = small_policy(0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        let d = p.obs_dim();
        let mut b = RolloutBuffer::new(d, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ppo_update(&mut p, &mut opt, &b, &PpoConfig::default(), &mut rng).is_err());
        for i in 0..8 {
            let o: Vec<f64> = (0..d).map(|k| ((i * d + k) as f64).sin()).collect();
            b.push(&o, i % 7, &[0.01; NUM_JOINTS], -3.0, 0.1, i as f64, i % 3 == 0).unwrap();
        }
        let before = p.flat();
        let cfg = PpoConfig { minibatches: 2, ..PpoConfig::default() };
        let s = ppo_update(&mut p, &mut opt, &b, &cfg, &mut rng).unwrap();
        assert!(s.policy_loss.is_finite() && s.grad_norm > 0.0);
        assert_ne!(p.flat(), before);
    }
}
