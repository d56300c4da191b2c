use std::collections::VecDeque;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, HandState, ObservedPose, SkillFeedback, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::nn::{AttentionEncoder, Module, ParamView, SeqEncoderConfig, SequenceEncoder};
use crate::so3::{add3, quat_to_6d, scale3, sub3, Mat3, Rot6D, UnitQuat, Vec3};

/// Per-step feature width: θ, a, θ − a (16 each), position 3, Rot6D 6, z 8.
pub const FEATURE_DIM: usize = 3 * NUM_JOINTS + 3 + 6 + 8;
/// Position inputs are fed as `POS_SCALE · p̂` (metres).
pub const POS_SCALE: f64 = 20.0;
/// The position head predicts `Δp / DP_SCALE`.
pub const DP_SCALE: f64 = 0.01;

const OUT_DIM: usize = 9;
const IDENTITY_BIAS: [f64; OUT_DIM] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

/// Pose in the canonical first frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub p: Vec3,
    pub q: UnitQuat,
    pub step: usize,
}

impl PoseEstimate {
    pub const CANONICAL: PoseEstimate = PoseEstimate { p: [0.0; 3], q: UnitQuat::IDENTITY, step: 0 };
}

/// `q' = Δq · q` (renormalized), `p' = p + Δp`.
pub fn integrate_pose(prev: &PoseEstimate, dq: &UnitQuat, dp: &Vec3) -> PoseEstimate {
    let q = dq.compose(&prev.q);
    let q = UnitQuat::new(q.w, q.x, q.y, q.z).unwrap_or(q);
    PoseEstimate { p: add3(&prev.p, dp), q, step: prev.step + 1 }
}

/// `[θ, a, θ − a, POS_SCALE·p̂, rot6d(q̂), z]`.
pub fn assemble_feature(
    hand: &HandState,
    prev_cmd: &[f64; NUM_JOINTS],
    prev_est: &PoseEstimate,
    z: &SkillFeedback,
) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    let n = NUM_JOINTS;
    for j in 0..n {
        f[j] = hand.theta[j];
        f[n + j] = prev_cmd[j];
        f[2 * n + j] = hand.theta[j] - prev_cmd[j];
    }
    let o = 3 * n;
    for i in 0..3 {
        f[o + i] = POS_SCALE * prev_est.p[i];
    }
    f[o + 3..o + 9].copy_from_slice(&quat_to_6d(&prev_est.q).0);
    f[o + 9..].copy_from_slice(&z.z);
    f
}

/// Differentiable Gram-Schmidt map from two 3-vectors to a rotation matrix
/// whose first two columns are the orthonormalized inputs. Matches
/// [`Rot6D::to_matrix`].
pub fn gram_schmidt(a1: &Vec3, a2: &Vec3) -> Result<Mat3> {
    let mut r = [0.0; 6];
    r[..3].copy_from_slice(a1);
    r[3..].copy_from_slice(a2);
    Rot6D(r).to_matrix()
}

/// Gradients with respect to `(a1, a2)` given `dL/dR`.
pub fn gram_schmidt_backward(a1: &Vec3, a2: &Vec3, dr: &Mat3) -> (Vec3, Vec3) {
    use crate::so3::{cross3, dot3, norm3};
    let n1 = norm3(a1);
    let b1 = scale3(a1, 1.0 / n1);
    let u2 = sub3(a2, &scale3(&b1, dot3(&b1, a2)));
    let n2 = norm3(&u2);
    let b2 = scale3(&u2, 1.0 / n2);
    let col = |k: usize| [dr[0][k], dr[1][k], dr[2][k]];
    let (g1, g2, g3) = (col(0), col(1), col(2));
    // b3 = b1 × b2
    let mut db1 = add3(&g1, &cross3(&b2, &g3));
    let db2 = add3(&g2, &cross3(&g3, &b1));
    // b2 = u2 / |u2|
    let du2 = scale3(&sub3(&db2, &scale3(&b2, dot3(&b2, &db2))), 1.0 / n2);
    // u2 = a2 − (b1·a2) b1
    let da2 = sub3(&du2, &scale3(&b1, dot3(&b1, &du2)));
    db1 = sub3(&db1, &add3(&scale3(&du2, dot3(&b1, a2)), &scale3(a2, dot3(&b1, &du2))));
    // b1 = a1 / |a1|
    let da1 = scale3(&sub3(&db1, &scale3(&b1, dot3(&b1, &db1))), 1.0 / n1);
    (da1, da2)
}

/// Pose the predicted delta is composed with in the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossAnchor {
    /// The rolled-out estimate that was fed to the window.
    Estimate,
    /// The ground-truth pose one step earlier.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub window: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Weight of the squared position error (metres²) in the loss.
    pub pos_weight: f64,
    pub loss_anchor: LossAnchor,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { window: 30, model_dim: 64, heads: 2, ff_dim: 64, pos_weight: 100.0, loss_anchor: LossAnchor::Truth }
    }
}

/// One supervised step: the estimate the window was built with and the
/// ground truth one step later, both in the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub prev_q: UnitQuat,
    pub prev_p: Vec3,
    pub target_q: UnitQuat,
    pub target_p: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub config: EstimatorConfig,
    pub encoder: AttentionEncoder,
}

impl Estimator {
    /// Random encoder with a zero output layer biased to the identity delta.
    pub fn new<R: Rng + ?Sized>(config: EstimatorConfig, rng: &mut R) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::InvalidInput("estimator window must be positive".into()));
        }
        let enc_cfg = SeqEncoderConfig {
            input_dim: FEATURE_DIM,
            model_dim: config.model_dim,
            heads: config.heads,
            ff_dim: config.ff_dim,
            window: config.window,
            output_dim: OUT_DIM,
        };
        let mut encoder = AttentionEncoder::new(enc_cfg, 1.0, rng)?;
        encoder.out.w.fill(0.0);
        encoder.out.b.assign(&ndarray::arr1(&IDENTITY_BIAS));
        Ok(Estimator { config, encoder })
    }

    pub fn window(&self) -> usize {
        self.config.window
    }

    /// Raw head outputs for `(batch · window, FEATURE_DIM)` rows.
    pub fn forward_raw(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.encoder.forward(x, self.config.window)?.0)
    }

    /// One-step deltas per window; a degenerate Rot6D yields an error entry.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<Result<(UnitQuat, Vec3)>>> {
        let y = self.forward_raw(x)?;
        Ok(y.rows().into_iter().map(|r| decode(r.as_slice().expect("contiguous"))).collect())
    }

    /// Mean loss `w‖p − p̂‖² + (2 − √(1 + tr(Rᵀ R̂)))` over the batch, where
    /// `R̂ = R_Δ R̂_prev`. The rotation term equals the sign-aligned squared
    /// quaternion distance `min(‖q − q̂‖², ‖q + q̂‖²)`. Accumulates parameter
    /// gradients into `grads` when given.
    pub fn loss(&self, x: ArrayView2<f64>, samples: &[Sample], grads: Option<&mut Estimator>) -> Result<f64> {
        let k = self.config.window;
        if x.nrows() != samples.len() * k {
            return Err(Error::dims("estimator batch rows", samples.len() * k, x.nrows()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty estimator batch".into()));
        }
        let (y, cache) = self.encoder.forward(x, k)?;
        let b = samples.len() as f64;
        let w = self.config.pos_weight;
        let mut dy = Array2::zeros(y.raw_dim());
        let mut total = 0.0;
        for (i, smp) in samples.iter().enumerate() {
            let r = y.row(i);
            let a1 = [r[0], r[1], r[2]];
            let a2 = [r[3], r[4], r[5]];
            let rd = gram_schmidt(&a1, &a2)?;
            let rt = smp.target_q.to_matrix();
            let rp = smp.prev_q.to_matrix();
            // M = R_t R_prevᵀ, tr(R_tᵀ R_Δ R_prev) = <M, R_Δ>
            let mut m = [[0.0; 3]; 3];
            let mut tr = 0.0;
            for a in 0..3 {
                for c in 0..3 {
                    m[a][c] = (0..3).map(|j| rt[a][j] * rp[c][j]).sum();
                    tr += m[a][c] * rd[a][c];
                }
            }
            let arg = 1.0 + tr;
            let sq = arg.max(1e-8).sqrt();
            let mut e = [0.0; 3];
            for j in 0..3 {
                e[j] = smp.target_p[j] - smp.prev_p[j] - DP_SCALE * r[6 + j];
            }
            let lp = w * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
            total += lp + 2.0 - sq;

            let coef = if arg > 1e-8 { -1.0 / (2.0 * sq * b) } else { 0.0 };
            let mut dr = [[0.0; 3]; 3];
            for a in 0..3 {
                for c in 0..3 {
                    dr[a][c] = coef * m[a][c];
                }
            }
            let (d1, d2) = gram_schmidt_backward(&a1, &a2, &dr);
            for j in 0..3 {
                dy[[i, j]] = d1[j];
                dy[[i, 3 + j]] = d2[j];
                dy[[i, 6 + j]] = -2.0 * w * DP_SCALE * e[j] / b;
            }
        }
        let loss = total / b;
        if !loss.is_finite() {
            return Err(Error::NonFinite("estimator loss".into()));
        }
        if let Some(g) = grads {
            self.encoder.backward(&cache, dy.view(), &mut g.encoder);
        }
        Ok(loss)
    }

    /// Tracker starting from the exactly known first frame of `state`.
    pub fn tracker(&self, state: &EnvState) -> EstimatorTracker {
        EstimatorTracker::new(ObservedPose { p: state.object.p, q: state.object.q }, self.config.window)
    }

    /// Runs one batched forward over every tracker with a pending observation
    /// and integrates the predicted deltas. Degenerate outputs fall back to
    /// the identity and are counted on the tracker.
    pub fn advance(&self, trackers: &mut [&mut EstimatorTracker]) -> Result<()> {
        let live: Vec<usize> = (0..trackers.len()).filter(|&i| trackers[i].pending).collect();
        if live.is_empty() {
            return Ok(());
        }
        let k = self.config.window;
        let mut x = Array2::zeros((live.len() * k, FEATURE_DIM));
        for (b, &i) in live.iter().enumerate() {
            trackers[i].window_into(x.slice_mut(s![b * k..(b + 1) * k, ..]).as_slice_mut().expect("contiguous"), k)?;
        }
        let preds = self.predict(x.view())?;
        for (&i, pred) in live.iter().zip(preds) {
            let t = &mut *trackers[i];
            let (dq, dp) = match pred {
                Ok(v) => v,
                Err(_) => {
                    t.degenerate += 1;
                    (UnitQuat::IDENTITY, [0.0; 3])
                }
            };
            t.estimate = integrate_pose(&t.estimate, &dq, &dp);
            t.pending = false;
        }
        Ok(())
    }
}

fn decode(r: &[f64]) -> Result<(UnitQuat, Vec3)> {
    let m = gram_schmidt(&[r[0], r[1], r[2]], &[r[3], r[4], r[5]])?;
    let q = UnitQuat::from_matrix(&m);
    Ok((q, [DP_SCALE * r[6], DP_SCALE * r[7], DP_SCALE * r[8]]))
}

impl Module for Estimator {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.encoder.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder.params_mut()
    }
}

/// Per-episode recursive state: the canonical origin, the running estimate
/// and the feature window since the last reset.
#[derive(Debug, Clone)]
pub struct EstimatorTracker {
    origin: ObservedPose,
    estimate: PoseEstimate,
    window: VecDeque<[f64; FEATURE_DIM]>,
    capacity: usize,
    pending: bool,
    pub degenerate: usize,
}

impl EstimatorTracker {
    pub fn new(origin: ObservedPose, capacity: usize) -> Self {
        EstimatorTracker {
            origin,
            estimate: PoseEstimate::CANONICAL,
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            pending: false,
            degenerate: 0,
        }
    }

    pub fn estimate(&self) -> &PoseEstimate {
        &self.estimate
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn to_canonical(&self, pose: &ObservedPose) -> PoseEstimate {
        PoseEstimate {
            p: sub3(&pose.p, &self.origin.p),
            q: pose.q.compose(&self.origin.q.conj()),
            step: self.estimate.step,
        }
    }

    pub fn world_pose(&self) -> ObservedPose {
        ObservedPose { p: add3(&self.estimate.p, &self.origin.p), q: self.estimate.q.compose(&self.origin.q) }
    }

    /// Overwrites the estimate, keeping the feature window.
    pub fn set_world_estimate(&mut self, pose: &ObservedPose) {
        self.estimate = self.to_canonical(pose);
    }

    /// Overwrites the estimate and starts a fresh window.
    pub fn reset_to(&mut self, pose: &ObservedPose) {
        self.set_world_estimate(pose);
        self.window.clear();
        self.pending = false;
    }

    /// Appends the feature built from the post-step hand state and the
    /// current (previous-step) estimate. Returns the feature.
    pub fn push_observation(&mut self, hand: &HandState, z: &SkillFeedback) -> [f64; FEATURE_DIM] {
        let f = assemble_feature(hand, &hand.target, &self.estimate, z);
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(f);
        self.pending = true;
        f
    }

    /// Writes the last `k` features, left-padded with the oldest one.
    fn window_into(&self, out: &mut [f64], k: usize) -> Result<()> {
        let first = self.window.front().ok_or_else(|| Error::InvalidInput("empty estimator window".into()))?;
        let pad = k.saturating_sub(self.window.len());
        let skip = self.window.len().saturating_sub(k);
        for (r, f) in std::iter::repeat_n(first, pad).chain(self.window.iter().skip(skip)).enumerate() {
            out[r * FEATURE_DIM..(r + 1) * FEATURE_DIM].copy_from_slice(f);
        }
        Ok(())
    }
}

/// Stacks features `frames[..=t]` into one `(k, FEATURE_DIM)` window ending
/// at `t`, left-padded with `frames[0]`.
pub(crate) fn window_rows(frames: &[Vec<f64>], t: usize, k: usize, out: &mut [f64]) {
    let start = (t + 1).saturating_sub(k);
    let pad = k - (t + 1 - start);
    for r in 0..k {
        let src = if r < pad { &frames[0] } else { &frames[start + r - pad] };
        out[r * FEATURE_DIM..(r + 1) * FEATURE_DIM].copy_from_slice(src);
    }
}
