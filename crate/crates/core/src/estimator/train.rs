use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{collect_dataset, CollectConfig, CollectStats, EstimatorDataset, PoseSource};
use super::model::{Estimator, EstimatorConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{run_episodes, Controller, RunOptions};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Checkpoint, Module};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for EstimatorTrainConfig {
    fn default() -> Self {
        EstimatorTrainConfig { epochs: 40, lr: 3e-3, batch_size: 64, max_grad_norm: 1.0, seed: 0 }
    }
}

/// Adam on shuffled minibatches. Returns the trained estimator and the mean
/// training loss of every epoch. A non-finite loss aborts.
pub fn train_estimator(
    init: Estimator,
    data: &EstimatorDataset,
    cfg: &EstimatorTrainConfig,
) -> Result<(Estimator, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty estimator dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let mut est = init;
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &est);
    let mut rng = seeds::rng(cfg.seed, seeds::TAG_SHUFFLE, 1);
    let mut idx = data.index();
    let k = est.window();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for chunk in idx.chunks(cfg.batch_size) {
            let (x, samples) = data.batch(chunk, k, est.config.loss_anchor);
            let mut g = est.zeroed();
            let loss = est
                .loss(x.view(), &samples, Some(&mut g))
                .map_err(|e| Error::Diverged(format!("estimator epoch {epoch}: {e}")))?;
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut g, cfg.max_grad_norm);
            }
            opt.step(&mut est, &g)?;
            sum += loss * chunk.len() as f64;
            n += chunk.len();
        }
        curve.push(sum / n as f64);
    }
    Ok((est, curve))
}

pub fn save_estimator(est: &Estimator, seed: u64, path: &Path) -> Result<()> {
    let meta = serde_json::json!({ "estimator": est.config });
    Checkpoint::from_module("estimator", seed, meta, est).save(path)
}

pub fn load_estimator(path: &Path) -> Result<Estimator> {
    let ck = Checkpoint::load(path)?;
    if ck.kind != "estimator" {
        return Err(Error::Incompatible(format!("expected an estimator checkpoint, found `{}`", ck.kind)));
    }
    let cfg: EstimatorConfig = serde_json::from_value(ck.meta["estimator"].clone())
        .map_err(|e| Error::Incompatible(format!("estimator config: {e}")))?;
    let mut est = Estimator::new(cfg, &mut seeds::rng(0, 0, 0))?;
    ck.load_into(&mut est)?;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundsConfig {
    pub seed: u64,
    pub rounds: usize,
    /// Episodes collected per round.
    pub episodes: usize,
    /// Noise on the ground-truth estimate during the bootstrap round.
    pub bootstrap_rot_std: f64,
    pub bootstrap_pos_std: f64,
    pub reset_rot: f64,
    pub reset_pos: f64,
    pub estimator: EstimatorConfig,
    pub train: EstimatorTrainConfig,
}

impl Default for RoundsConfig {
    fn default() -> Self {
        RoundsConfig {
            seed: 0,
            rounds: 2,
            episodes: 256,
            bootstrap_rot_std: 0.05,
            bootstrap_pos_std: 0.002,
            reset_rot: 0.8,
            reset_pos: 0.03,
            estimator: EstimatorConfig::default(),
            train: EstimatorTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundsOutcome {
    pub estimator: Estimator,
    pub losses: Vec<Vec<f64>>,
    pub stats: Vec<CollectStats>,
}

/// Alternating collect/train rounds. Round 0 feeds noisy ground truth to the
/// planner and the feature window; later rounds close the loop on the current
/// estimator. Each round trains on everything collected so far, continuing
/// from the previous parameters.
pub fn run_estimator_rounds(
    controller: &dyn Controller,
    env_cfg: &EnvConfig,
    cfg: &RoundsConfig,
    out_dir: Option<&Path>,
) -> Result<RoundsOutcome> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidInput("at least one round is required".into()));
    }
    let mut est = Estimator::new(cfg.estimator, &mut seeds::rng(cfg.seed, seeds::TAG_ESTIMATOR, u64::MAX))?;
    let mut data = EstimatorDataset::default();
    let mut losses = Vec::new();
    let mut stats = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for round in 0..cfg.rounds {
        let ccfg = CollectConfig {
            episodes: cfg.episodes,
            seed: seeds::derive(cfg.seed, seeds::TAG_ESTIMATOR, round as u64),
            window: cfg.estimator.window,
            reset_rot: cfg.reset_rot,
            reset_pos: cfg.reset_pos,
        };
        let source = if round == 0 {
            PoseSource::NoisyTruth { rot_std: cfg.bootstrap_rot_std, pos_std: cfg.bootstrap_pos_std }
        } else {
            PoseSource::Estimator(&est)
        };
        let (d, s) = collect_dataset(controller, env_cfg, source, &ccfg)?;
        if let Some(dir) = out_dir {
            d.save_jsonl(&dir.join(format!("dataset_round{round}.jsonl")))?;
        }
        data.extend(d);
        stats.push(s);
        let tcfg = EstimatorTrainConfig { seed: seeds::derive(cfg.train.seed, round as u64, 0), ..cfg.train };
        let (next, curve) = train_estimator(est, &data, &tcfg)?;
        est = next;
        losses.push(curve);
    }
    if let Some(dir) = out_dir {
        save_estimator(&est, cfg.seed, &dir.join("estimator.json"))?;
        let path = dir.join("estimator_curve.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        w.write_record(["round", "epoch", "loss", "resets", "collected_steps"])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for (r, curve) in losses.iter().enumerate() {
            for (e, l) in curve.iter().enumerate() {
                w.write_record([
                    r.to_string(),
                    e.to_string(),
                    format!("{l:.9}"),
                    stats[r].resets.to_string(),
                    stats[r].steps.to_string(),
                ])
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(RoundsOutcome { estimator: est, losses, stats })
}

/// Per-episode tracking quality with the estimator in the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorEpisodeReport {
    pub episode: u64,
    pub steps: usize,
    pub success: bool,
    pub final_rot_err: f64,
    pub median_rot_err: f64,
    pub max_rot_err: f64,
    pub final_pos_err: f64,
    /// Times the error rose above either reset threshold.
    pub threshold_crossings: usize,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn evaluate_estimator(
    controller: &dyn Controller,
    est: &Estimator,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    reset_rot: f64,
    reset_pos: f64,
) -> Result<Vec<EstimatorEpisodeReport>> {
    let opts = RunOptions { estimator: Some(est), ..RunOptions::default() };
    let results = run_episodes(controller, env_cfg, episodes, seed, opts)?;
    Ok(results
        .iter()
        .map(|r| {
            let mut crossings = 0;
            let mut above = false;
            for (a, p) in r.est_rot_err.iter().zip(r.est_pos_err.iter()) {
                let now = *a > reset_rot || *p > reset_pos;
                crossings += (now && !above) as usize;
                above = now;
            }
            EstimatorEpisodeReport {
                episode: r.episode,
                steps: r.length,
                success: r.success,
                final_rot_err: r.est_rot_err.last().copied().unwrap_or(0.0),
                median_rot_err: median(&r.est_rot_err),
                max_rot_err: r.est_rot_err.iter().copied().fold(0.0, f64::max),
                final_pos_err: r.est_pos_err.last().copied().unwrap_or(0.0),
                threshold_crossings: crossings,
            }
        })
        .collect())
}

pub fn write_estimator_report(path: &Path, rows: &[EstimatorEpisodeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
