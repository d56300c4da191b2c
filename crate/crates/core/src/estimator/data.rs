use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{window_rows, Estimator, EstimatorTracker, LossAnchor, PoseEstimate, Sample, FEATURE_DIM};
use crate::env::{Env, EnvConfig, ObservedPose};
use crate::error::{Error, Result};
use crate::eval::{ControlInput, Controller};
use crate::planner::PlannerHistory;
use crate::seeds;
use crate::so3::{geodesic_distance, norm3, sample_rotation_noise, sub3, UnitQuat, Vec3};

/// Drift reset rule: strictly more than `rot` radians or `pos` metres.
pub fn needs_reset(est: &ObservedPose, truth: &ObservedPose, rot: f64, pos: f64) -> bool {
    geodesic_distance(&est.q, &truth.q) > rot || norm3(&sub3(&est.p, &truth.p)) > pos
}

/// What the planner and the feature's previous-estimate block see.
#[derive(Clone, Copy)]
pub enum PoseSource<'a> {
    /// Ground truth (no noise).
    Truth,
    /// Ground truth perturbed independently every step.
    NoisyTruth { rot_std: f64, pos_std: f64 },
    /// Closed loop on a trained estimator.
    Estimator(&'a Estimator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub episodes: usize,
    pub seed: u64,
    pub window: usize,
    pub reset_rot: f64,
    pub reset_pos: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig { episodes: 256, seed: 0, window: 30, reset_rot: 0.8, reset_pos: 0.03 }
    }
}

/// A run of consecutive steps between resets. Sample `t` pairs the window
/// ending at `features[t]` with the estimate that fed it and the ground
/// truth one step later, all in the canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub episode: u64,
    pub start_step: usize,
    pub features: Vec<Vec<f64>>,
    pub prev_q: Vec<UnitQuat>,
    pub prev_p: Vec<Vec3>,
    pub truth_prev_q: Vec<UnitQuat>,
    pub truth_prev_p: Vec<Vec3>,
    pub target_q: Vec<UnitQuat>,
    pub target_p: Vec<Vec3>,
}

impl Segment {
    fn new(episode: u64, start_step: usize) -> Self {
        Segment {
            episode,
            start_step,
            features: Vec::new(),
            prev_q: Vec::new(),
            prev_p: Vec::new(),
            truth_prev_q: Vec::new(),
            truth_prev_p: Vec::new(),
            target_q: Vec::new(),
            target_p: Vec::new(),
        }
    }

    fn push(&mut self, f: &[f64; FEATURE_DIM], prev: &PoseEstimate, truth_prev: &PoseEstimate, target: &PoseEstimate) {
        self.features.push(f.to_vec());
        self.prev_q.push(prev.q);
        self.prev_p.push(prev.p);
        self.truth_prev_q.push(truth_prev.q);
        self.truth_prev_p.push(truth_prev.p);
        self.target_q.push(target.q);
        self.target_p.push(target.p);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        for (what, len) in [
            ("prev_q", self.prev_q.len()),
            ("prev_p", self.prev_p.len()),
            ("truth_prev_q", self.truth_prev_q.len()),
            ("truth_prev_p", self.truth_prev_p.len()),
            ("target_q", self.target_q.len()),
            ("target_p", self.target_p.len()),
        ] {
            if len != n {
                return Err(Error::dims(format!("segment {what}"), n, len));
            }
        }
        if let Some(f) = self.features.iter().find(|f| f.len() != FEATURE_DIM) {
            return Err(Error::dims("segment feature", FEATURE_DIM, f.len()));
        }
        Ok(())
    }

    fn sample(&self, t: usize, anchor: LossAnchor) -> Sample {
        let (prev_q, prev_p) = match anchor {
            LossAnchor::Estimate => (self.prev_q[t], self.prev_p[t]),
            LossAnchor::Truth => (self.truth_prev_q[t], self.truth_prev_p[t]),
        };
        Sample { prev_q, prev_p, target_q: self.target_q[t], target_p: self.target_p[t] }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorDataset {
    pub segments: Vec<Segment>,
}

impl EstimatorDataset {
    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, other: EstimatorDataset) {
        self.segments.extend(other.segments);
    }

    /// `(segment, step)` pairs of every sample.
    pub fn index(&self) -> Vec<(usize, usize)> {
        self.segments.iter().enumerate().flat_map(|(s, seg)| (0..seg.len()).map(move |t| (s, t))).collect()
    }

    /// Stacks windows of length `k` and their supervision targets.
    pub fn batch(&self, idx: &[(usize, usize)], k: usize, anchor: LossAnchor) -> (Array2<f64>, Vec<Sample>) {
        let mut x = Array2::zeros((idx.len() * k, FEATURE_DIM));
        let data = x.as_slice_mut().expect("contiguous");
        let mut samples = Vec::with_capacity(idx.len());
        for (b, &(s, t)) in idx.iter().enumerate() {
            let seg = &self.segments[s];
            window_rows(&seg.features, t, k, &mut data[b * k * FEATURE_DIM..(b + 1) * k * FEATURE_DIM]);
            samples.push(seg.sample(t, anchor));
        }
        (x, samples)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for seg in &self.segments {
            serde_json::to_writer(&mut w, seg)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut segments = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |msg: String| Error::Malformed { kind: "dataset", line: i as u64 + 1, msg };
            let seg: Segment = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            seg.validate().map_err(|e| malformed(e.to_string()))?;
            segments.push(seg);
        }
        Ok(EstimatorDataset { segments })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectStats {
    pub episodes: usize,
    pub steps: usize,
    pub resets: usize,
    pub successes: usize,
    pub degenerate: usize,
}

struct EpisodeData {
    segments: Vec<Segment>,
    steps: usize,
    resets: usize,
    success: bool,
    degenerate: usize,
}

fn truth_pose(env: &Env) -> ObservedPose {
    let o = &env.state().object;
    ObservedPose { p: o.p, q: o.q }
}

fn perturb<R: Rng + ?Sized>(pose: &ObservedPose, rot_std: f64, pos_std: f64, rng: &mut R) -> ObservedPose {
    let q = if rot_std > 0.0 { sample_rotation_noise(rng, rot_std) * pose.q } else { pose.q };
    let mut p = pose.p;
    if pos_std > 0.0 {
        for v in p.iter_mut() {
            *v += pos_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ObservedPose { p, q }
}

fn collect_episode(
    controller: &dyn Controller,
    env_cfg: &Arc<EnvConfig>,
    source: PoseSource<'_>,
    cfg: &CollectConfig,
    ep: u64,
) -> Result<EpisodeData> {
    let ep_seed = seeds::derive(cfg.seed, seeds::TAG_ESTIMATOR, ep);
    let mut env = Env::new(env_cfg.clone(), ep_seed)?;
    let mut act_rng = seeds::rng(ep_seed, seeds::TAG_EVAL_ACT, 0);
    let mut noise_rng = seeds::rng(ep_seed, seeds::TAG_ESTIMATOR, 0);
    let mut tracker = EstimatorTracker::new(truth_pose(&env), cfg.window);
    if let PoseSource::NoisyTruth { rot_std, pos_std } = source {
        let p = perturb(&truth_pose(&env), rot_std, pos_std, &mut noise_rng);
        tracker.set_world_estimate(&p);
    }
    let mut history = PlannerHistory::new(controller.history_len(), env_cfg.palm_center);
    history.reset(tracker.world_pose());

    let mut out = EpisodeData { segments: Vec::new(), steps: 0, resets: 0, success: false, degenerate: 0 };
    let mut seg = Segment::new(ep, 1);
    loop {
        let cmd = {
            let st = env.state();
            let input = ControlInput { history: &history, goal: st.goal, z: st.feedback };
            controller.act_batch(&[input], &mut [&mut act_rng])?.remove(0)
        };
        let before = tracker.to_canonical(&truth_pose(&env));
        let r = env.step(&cmd)?;
        out.steps += 1;
        let prev = *tracker.estimate();
        let f = tracker.push_observation(&r.info.hand, &r.info.z);
        let truth = ObservedPose { p: r.info.object.p, q: r.info.object.q };
        seg.push(&f, &prev, &before, &tracker.to_canonical(&truth));
        match source {
            PoseSource::Truth => tracker.set_world_estimate(&truth),
            PoseSource::NoisyTruth { rot_std, pos_std } => {
                tracker.set_world_estimate(&perturb(&truth, rot_std, pos_std, &mut noise_rng));
            }
            PoseSource::Estimator(est) => est.advance(&mut [&mut tracker])?,
        }
        if needs_reset(&tracker.world_pose(), &truth, cfg.reset_rot, cfg.reset_pos) {
            out.resets += 1;
            tracker.reset_to(&truth);
            out.segments.push(std::mem::replace(&mut seg, Segment::new(ep, r.info.step + 1)));
        }
        history.push_action(cmd.axis);
        if r.done {
            out.success = r.info.success;
            break;
        }
        history.push_pose(tracker.world_pose());
    }
    if !seg.is_empty() {
        out.segments.push(seg);
    }
    out.degenerate = tracker.degenerate;
    Ok(out)
}

/// Rolls `cfg.episodes` episodes of `controller`, logging one sample per
/// step and applying the drift reset rule. Episodes run in parallel and are
/// merged in episode order.
pub fn collect_dataset(
    controller: &dyn Controller,
    env_cfg: &EnvConfig,
    source: PoseSource<'_>,
    cfg: &CollectConfig,
) -> Result<(EstimatorDataset, CollectStats)> {
    env_cfg.validate()?;
    if let PoseSource::Estimator(e) = source {
        if e.window() != cfg.window {
            return Err(Error::Incompatible(format!(
                "estimator window {} differs from collection window {}",
                e.window(),
                cfg.window
            )));
        }
    }
    let env_cfg = Arc::new(env_cfg.clone());
    let eps: Vec<EpisodeData> = (0..cfg.episodes as u64)
        .into_par_iter()
        .map(|ep| collect_episode(controller, &env_cfg, source, cfg, ep))
        .collect::<Result<_>>()?;
    let mut stats = CollectStats { episodes: eps.len(), ..CollectStats::default() };
    let mut data = EstimatorDataset::default();
    for e in eps {
        stats.steps += e.steps;
        stats.resets += e.resets;
        stats.successes += e.success as usize;
        stats.degenerate += e.degenerate;
        data.segments.extend(e.segments);
    }
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::HeuristicController;
    use crate::so3::{quat_from_axis_angle, sample_uniform_quat, RotationAxis};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heuristic() -> HeuristicController {
        HeuristicController { step_angle: 0.15, threshold: 0.4 }
    }

    fn cfg(episodes: usize) -> CollectConfig {
        CollectConfig { episodes, seed: 3, window: 4, ..CollectConfig::default() }
    }

    #[test]
    fn injected_errors_fire_reset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = ObservedPose { p: [0.0, 0.0, 0.0], q: sample_uniform_quat(&mut rng) };
        let rot = |a: f64| ObservedPose { q: quat_from_axis_angle(RotationAxis::PosX, a).unwrap() * truth.q, ..truth };
        assert!(needs_reset(&rot(0.9), &truth, 0.8, 0.03));
        assert!(!needs_reset(&rot(0.7), &truth, 0.8, 0.03));
        let shifted = ObservedPose { p: [0.04, 0.0, 0.0], ..truth };
        assert!(needs_reset(&shifted, &truth, 0.8, 0.03));
        let near = ObservedPose { p: [0.0, 0.02, 0.0], ..truth };
        assert!(!needs_reset(&near, &truth, 0.8, 0.03));
    }

    proptest! {
        #[test]
        fn reset_iff_threshold_crossed(
            seed in 0u64..10_000,
            angle in 0.0f64..1.6,
            offset in 0.0f64..0.06,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = ObservedPose { p: [0.01, -0.02, 0.0], q: sample_uniform_quat(&mut rng) };
            let axis = crate::so3::sample_unit_vec3(&mut rng);
            let dq = UnitQuat::from_rotation_vector([axis[0] * angle, axis[1] * angle, axis[2] * angle]);
            let dir = crate::so3::sample_unit_vec3(&mut rng);
            let est = ObservedPose {
                q: dq * truth.q,
                p: [truth.p[0] + dir[0] * offset, truth.p[1] + dir[1] * offset, truth.p[2] + dir[2] * offset],
            };
            // keep clear of rounding at the boundary
            prop_assume!((angle - 0.8).abs() > 1e-9 && (offset - 0.03).abs() > 1e-12);
            prop_assert_eq!(needs_reset(&est, &truth, 0.8, 0.03), angle > 0.8 || offset > 0.03);
        }
    }

    #[test]
    fn perfect_estimate_never_resets() {
        let (data, stats) = collect_dataset(&heuristic(), &EnvConfig::noise_free(), PoseSource::Truth, &cfg(8)).unwrap();
        assert_eq!(stats.resets, 0);
        assert_eq!(data.segments.len(), 8);
        assert_eq!(data.len(), stats.steps);
        for seg in &data.segments {
            for t in 0..seg.len() {
                assert!(geodesic_distance(&seg.prev_q[t], &if t == 0 { UnitQuat::IDENTITY } else { seg.target_q[t - 1] }) < 1e-12);
            }
        }
    }

    #[test]
    fn diverging_estimator_resets_and_splits_segments() {
        let mut est = Estimator::new(
            super::super::EstimatorConfig { window: 4, model_dim: 8, heads: 2, ff_dim: 8, ..Default::default() },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        // constant 0.5 rad per-step rotation about z
        est.encoder.out.b.assign(&ndarray::arr1(&[0.5f64.cos(), 0.5f64.sin(), 0.0, -(0.5f64.sin()), 0.5f64.cos(), 0.0, 0.0, 0.0, 0.0]));
        let (data, stats) = collect_dataset(&heuristic(), &EnvConfig::noise_free(), PoseSource::Estimator(&est), &cfg(4)).unwrap();
        assert!(stats.resets > 0);
        assert!(data.segments.len() >= stats.resets && data.segments.len() <= stats.resets + 4);
        assert_eq!(data.len(), stats.steps);
        for pair in data.segments.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.episode == b.episode {
                // a segment after a reset starts from the ground truth
                assert_eq!(b.start_step, a.start_step + a.len());
                assert!(geodesic_distance(&b.prev_q[0], a.target_q.last().unwrap()) < 1e-12);
            }
        }
        for seg in &data.segments {
            seg.validate().unwrap();
            // truth anchors chain through the segment
            for t in 1..seg.len() {
                assert!(geodesic_distance(&seg.truth_prev_q[t], &seg.target_q[t - 1]) < 1e-12);
                assert_eq!(seg.truth_prev_p[t], seg.target_p[t - 1]);
            }
            for t in 1..seg.len() {
                let err = geodesic_distance(&seg.prev_q[t], &seg.target_q[t - 1]);
                assert!(err <= 0.8 + 1e-9, "window straddles a reset: {err}");
            }
        }
    }

    #[test]
    fn collection_is_deterministic_and_roundtrips() {
        let src = PoseSource::NoisyTruth { rot_std: 0.05, pos_std: 0.002 };
        let (a, sa) = collect_dataset(&heuristic(), &EnvConfig::small_noise(), src, &cfg(6)).unwrap();
        let (b, sb) = collect_dataset(&heuristic(), &EnvConfig::small_noise(), src, &cfg(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        a.save_jsonl(&path).unwrap();
        assert_eq!(EstimatorDataset::load_jsonl(&path).unwrap(), a);
        std::fs::write(&path, "{\"episode\": 1}\n").unwrap();
        let err = EstimatorDataset::load_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn batch_windows_stay_inside_segments() {
        let (data, _) = collect_dataset(&heuristic(), &EnvConfig::small_noise(), PoseSource::Truth, &cfg(2)).unwrap();
        let idx = data.index();
        let (x, s) = data.batch(&idx[..3], 4, LossAnchor::Estimate);
        assert_eq!(x.nrows(), 12);
        assert_eq!(s.len(), 3);
        // first sample: all rows equal the segment's first frame
        for r in 0..4 {
            assert_eq!(x.row(r).to_vec(), data.segments[0].features[0]);
        }
    }
}
