//! Evaluation suites: success rates with Wilson intervals, stage 1/2
//! evaluation, robustness sweeps, smoothness metrics and plot-data export.

mod controller;
mod runner;

pub use controller::{
    ControlInput, Controller, FixedController, HeuristicController, LearnedController, RandomController,
};
pub use runner::{run_episodes, EpisodeResult, RunOptions};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Shape, TrajectoryStep, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::so3::norm3;

/// 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub stage: u8,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_length: f64,
    pub mean_reward: f64,
    pub drops: usize,
    pub false_stops: usize,
    pub timeouts: usize,
}

impl EvalReport {
    pub fn from_results(label: &str, stage: u8, results: &[EpisodeResult]) -> Self {
        let n = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let (ci_lo, ci_hi) = wilson_interval(successes, n);
        let denom = n.max(1) as f64;
        EvalReport {
            label: label.to_string(),
            stage,
            episodes: n,
            successes,
            success_rate: if n > 0 { successes as f64 / n as f64 } else { 0.0 },
            ci_lo,
            ci_hi,
            mean_length: results.iter().map(|r| r.length as f64).sum::<f64>() / denom,
            mean_reward: results.iter().map(|r| r.total_reward).sum::<f64>() / denom,
            drops: results.iter().filter(|r| r.dropped).count(),
            false_stops: results.iter().filter(|r| r.false_stop).count(),
            timeouts: results.iter().filter(|r| r.timeout).count(),
        }
    }
}

/// Stage 1 without an estimator (noisy ground-truth pose), stage 2 with the
/// estimator in the loop.
pub fn run_eval(
    controller: &dyn Controller,
    estimator: Option<&Estimator>,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    record: bool,
) -> Result<(EvalReport, Vec<EpisodeResult>)> {
    let opts = RunOptions { estimator, record, ..RunOptions::default() };
    let results = run_episodes(controller, env_cfg, episodes, seed, opts)?;
    let stage = if estimator.is_some() { 2 } else { 1 };
    Ok((EvalReport::from_results(&controller.name(), stage, &results), results))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// mean |τ|
    pub torque: f64,
    /// mean over steps of Σ_j |τ_j Δθ_j|, ×10
    pub work: f64,
    /// mean |θ_{t+1} − 2θ_t + θ_{t−1}| / Δt²
    pub dof_acc: f64,
    /// mean |θ̇|
    pub dof_vel: f64,
    /// mean ‖v‖, ×10
    pub lin_vel: f64,
}

/// Smoothness of one episode's trajectory.
pub fn smoothness_metrics(traj: &[TrajectoryStep], dt: f64) -> Result<SmoothnessReport> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("smoothness needs at least 3 steps, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let j = NUM_JOINTS as f64;
    let nf = n as f64;
    let torque = traj.iter().map(|s| s.torque.iter().map(|t| t.abs()).sum::<f64>()).sum::<f64>() / (nf * j);
    let dof_vel = traj.iter().map(|s| s.theta_dot.iter().map(|t| t.abs()).sum::<f64>()).sum::<f64>() / (nf * j);
    let lin_vel = 10.0 * traj.iter().map(|s| norm3(&s.object.v)).sum::<f64>() / nf;
    let work = 10.0
        * traj
            .windows(2)
            .map(|w| (0..NUM_JOINTS).map(|k| (w[1].torque[k] * (w[1].theta[k] - w[0].theta[k])).abs()).sum::<f64>())
            .sum::<f64>()
        / (nf - 1.0);
    let dof_acc = traj
        .windows(3)
        .map(|w| (0..NUM_JOINTS).map(|k| (w[2].theta[k] - 2.0 * w[1].theta[k] + w[0].theta[k]).abs()).sum::<f64>())
        .sum::<f64>()
        / ((nf - 2.0) * j * dt * dt);
    Ok(SmoothnessReport { torque, work, dof_acc, dof_vel, lin_vel })
}

/// Per-episode metrics averaged over every recorded episode with at least
/// three steps. Returns the average and the number of episodes used.
pub fn smoothness_over_episodes(results: &[EpisodeResult], dt: f64) -> Result<(SmoothnessReport, usize)> {
    let mut acc = SmoothnessReport::default();
    let mut used = 0usize;
    for r in results {
        let Some(traj) = &r.trajectory else { continue };
        if traj.len() < 3 {
            continue;
        }
        let m = smoothness_metrics(traj, dt)?;
        acc.torque += m.torque;
        acc.work += m.work;
        acc.dof_acc += m.dof_acc;
        acc.dof_vel += m.dof_vel;
        acc.lin_vel += m.lin_vel;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput("no recorded episode with at least 3 steps".into()));
    }
    let u = used as f64;
    Ok((
        SmoothnessReport {
            torque: acc.torque / u,
            work: acc.work / u,
            dof_acc: acc.dof_acc / u,
            dof_vel: acc.dof_vel / u,
            lin_vel: acc.lin_vel / u,
        },
        used,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Observation rotation noise std (rad).
    RotNoise,
    /// Observation position noise std (m).
    PosNoise,
    /// Rotation noise `v` together with position noise `v / 10`.
    Noise,
    /// Physics randomization range multiplier.
    PhysicsRange,
    /// Single shape by index (sphere, ellipsoid, cylinder, box).
    Shape,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rot-noise" => Ok(SweepAxis::RotNoise),
            "pos-noise" => Ok(SweepAxis::PosNoise),
            "noise" => Ok(SweepAxis::Noise),
            "physics-range" => Ok(SweepAxis::PhysicsRange),
            "shape" => Ok(SweepAxis::Shape),
            _ => Err(Error::InvalidInput(format!("unknown sweep axis `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::RotNoise => "rot-noise",
            SweepAxis::PosNoise => "pos-noise",
            SweepAxis::Noise => "noise",
            SweepAxis::PhysicsRange => "physics-range",
            SweepAxis::Shape => "shape",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &EnvConfig, value: f64) -> Result<EnvConfig> {
        let mut c = base.clone();
        match self {
            SweepAxis::RotNoise => c.obs_noise.rot_std = value,
            SweepAxis::PosNoise => c.obs_noise.pos_std = value,
            SweepAxis::Noise => {
                c.obs_noise.rot_std = value;
                c.obs_noise.pos_std = value / 10.0;
            }
            SweepAxis::PhysicsRange => c.physics.range_multiplier = value,
            SweepAxis::Shape => {
                let i = value as usize;
                if value.fract() != 0.0 || i >= Shape::ALL.len() {
                    return Err(Error::InvalidInput(format!("shape index {value} out of range")));
                }
                c.physics.shapes = vec![Shape::ALL[i]];
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub episodes: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("sweep grid is empty".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("sweep grid must be strictly increasing".into()));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidInput("sweep needs at least one episode per point".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub axis: String,
    pub value: f64,
    pub success: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub episodes: usize,
}

/// Evaluates every variant at every grid point with the same seed, so the
/// episodes are paired across variants.
pub fn run_sweep(spec: &SweepSpec, base: &EnvConfig, variants: &[&dyn Controller]) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len() * variants.len());
    for v in variants {
        for &value in &spec.values {
            let cfg = spec.axis.apply(base, value)?;
            let (rep, _) = run_eval(*v, None, &cfg, spec.episodes, spec.seed, false)?;
            rows.push(SweepRow {
                variant: v.name(),
                axis: spec.axis.name().to_string(),
                value,
                success: rep.success_rate,
                ci_lo: rep.ci_lo,
                ci_hi: rep.ci_hi,
                episodes: rep.episodes,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub group: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Aggregates column `y` by (`group`, `x`) across one or more CSV files
/// (typically one per seed). `std` is the sample standard deviation, zero for
/// a single value. Rows are ordered by group, then x.
pub fn export_plot_data(inputs: &[PathBuf], x: &str, y: &str, group: Option<&str>) -> Result<Vec<PlotRow>> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no input files".into()));
    }
    let mut acc: BTreeMap<(String, OrdF64), Vec<f64>> = BTreeMap::new();
    for path in inputs {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let malformed = |line: u64, msg: String| Error::Malformed { kind: "csv", line, msg };
        let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| malformed(1, format!("missing column `{name}`")))
        };
        let xi = col(x)?;
        let yi = col(y)?;
        let gi = group.map(col).transpose()?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                malformed(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let num = |i: usize, name: &str| -> Result<f64> {
                let s = rec.get(i).unwrap_or("");
                s.trim().parse::<f64>().map_err(|_| malformed(line, format!("column `{name}`: `{s}` is not a number")))
            };
            let xv = num(xi, x)?;
            let yv = num(yi, y)?;
            let g = gi.map(|i| rec.get(i).unwrap_or("").to_string()).unwrap_or_default();
            acc.entry((g, OrdF64(xv))).or_default().push(yv);
        }
    }
    Ok(acc
        .into_iter()
        .map(|((group, x), ys)| {
            let n = ys.len();
            let mean = ys.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            PlotRow { group, x: x.0, mean, std, n }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
