//! Kinematic hand-object environment driven by a scripted rotation skill.

mod batch;
mod config;
mod skill;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use batch::{batch_step, BatchEnv};
pub use config::{EnvConfig, GraspConfig, JointConfig, ObsNoise, PhysicsRanges};
pub use skill::{
    gait, gait_offset, grasp_config, grasp_mismatch, ideal_residual, j_res, residual_rotation, skill_step,
    SkillCommand, SkillFeedback, SkillState, SkillStepOutput, FEEDBACK_DIM, NUM_GRASPS,
};
pub use trajectory::{read_trajectory, TrajectoryStep, TrajectoryWriter};

use crate::error::{Error, Result};
use crate::planner::compute_reward;
use crate::so3::{
    add3, geodesic_distance, norm3, sample_rotation_noise, sample_uniform_quat, sub3, RotationAxis, UnitQuat, Vec3,
};

pub const NUM_JOINTS: usize = 16;
/// Mean reversion of the position drift per control step.
pub const OU_THETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Ellipsoid,
    Cylinder,
    Box,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Ellipsoid, Shape::Cylinder, Shape::Box];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sphere" => Ok(Shape::Sphere),
            "ellipsoid" => Ok(Shape::Ellipsoid),
            "cylinder" => Ok(Shape::Cylinder),
            "box" => Ok(Shape::Box),
            other => Err(Error::InvalidInput(format!("unsupported shape `{other}`"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Sphere => "sphere",
            Shape::Ellipsoid => "ellipsoid",
            Shape::Cylinder => "cylinder",
            Shape::Box => "box",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub p: Vec3,
    pub q: UnitQuat,
    pub v: Vec3,
}

impl ObjectState {
    pub fn at_rest(p: Vec3) -> Self {
        ObjectState { p, q: UnitQuat::IDENTITY, v: [0.0; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    pub theta: [f64; NUM_JOINTS],
    pub theta_dot: [f64; NUM_JOINTS],
    /// Last joint targets sent to the hand.
    pub target: [f64; NUM_JOINTS],
}

impl HandState {
    pub fn at(theta: [f64; NUM_JOINTS]) -> Self {
        HandState { theta, theta_dot: [0.0; NUM_JOINTS], target: theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub size_scale: f64,
    pub speed_factor: f64,
    pub slip_prob: f64,
    pub rot_noise_std: f64,
    pub pos_noise_std: f64,
    pub shape: Shape,
    pub grasp_index: usize,
}

impl PhysicsParams {
    pub fn sample<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Self {
        let r = &cfg.physics;
        let uni = |rng: &mut R, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let size_scale = uni(rng, r.effective_size());
        let speed_factor = uni(rng, r.effective_speed());
        let slip_prob = uni(rng, r.effective_slip());
        let shape = r.shapes[rng.random_range(0..r.shapes.len())];
        let grasp_index = rng.random_range(0..NUM_GRASPS);
        PhysicsParams {
            size_scale,
            speed_factor,
            slip_prob,
            rot_noise_std: r.rot_noise_std,
            pos_noise_std: r.pos_noise_std,
            shape,
            grasp_index,
        }
    }
}

/// First-order joint tracking toward clamped targets. Returns the new state
/// and the torque proxy `kp (a - θ) - kd θ̇` evaluated on the incoming state.
pub fn joint_dynamics_step(hand: &HandState, a: &[f64; NUM_JOINTS], jc: &JointConfig, dt: f64) -> Result<(HandState, [f64; NUM_JOINTS])> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint targets".into()));
    }
    let mut next = *hand;
    let mut torque = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let target = a[j].clamp(-jc.limit, jc.limit);
        torque[j] = jc.kp * (target - hand.theta[j]) - jc.kd * hand.theta_dot[j];
        let th = (hand.theta[j] + jc.alpha * (target - hand.theta[j])).clamp(-jc.limit, jc.limit);
        next.theta_dot[j] = (th - hand.theta[j]) / dt;
        next.theta[j] = th;
        next.target[j] = target;
    }
    Ok((next, torque))
}

/// True iff the command is STOP and the object is within the success
/// threshold of the goal.
pub fn success_check(object: &ObjectState, goal: &UnitQuat, cmd_axis: RotationAxis, threshold: f64) -> bool {
    cmd_axis.is_stop() && geodesic_distance(&object.q, goal) < threshold
}

pub fn env_reset<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> (ObjectState, HandState, PhysicsParams, UnitQuat) {
    let phys = PhysicsParams::sample(cfg, rng);
    let q0 = sample_uniform_quat(rng);
    let goal = sample_uniform_quat(rng);
    let object = ObjectState { p: cfg.palm_center, q: q0, v: [0.0; 3] };
    let hand = HandState::at(grasp_config(phys.grasp_index));
    (object, hand, phys, goal)
}

/// Noisy view of the object pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedPose {
    pub p: Vec3,
    pub q: UnitQuat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub object: ObjectState,
    pub hand: HandState,
    pub z: SkillFeedback,
    pub torque: [f64; NUM_JOINTS],
    pub distance: f64,
    pub success: bool,
    pub dropped: bool,
    pub false_stop: bool,
    pub timeout: bool,
    pub slip: bool,
    pub grasp_lost: bool,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub object: ObjectState,
    pub hand: HandState,
    pub physics: PhysicsParams,
    pub goal: UnitQuat,
    pub skill: SkillState,
    pub feedback: SkillFeedback,
    pub step: usize,
    pub done: bool,
    pub episode: u64,
}

/// One environment with its own random streams: `rng` drives dynamics and
/// resets, `obs_rng` drives observation noise only.
#[derive(Debug, Clone)]
pub struct Env {
    config: Arc<EnvConfig>,
    seed: u64,
    rng: ChaCha8Rng,
    obs_rng: ChaCha8Rng,
    state: EnvState,
}

impl Env {
    pub fn new(config: Arc<EnvConfig>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs_rng = ChaCha8Rng::seed_from_u64(seed);
        obs_rng.set_stream(1);
        let state = Self::fresh_state(&config, &mut rng, 0);
        Ok(Env { config, seed, rng, obs_rng, state })
    }

    fn fresh_state(cfg: &EnvConfig, rng: &mut ChaCha8Rng, episode: u64) -> EnvState {
        let (object, hand, physics, goal) = env_reset(cfg, rng);
        let feedback = SkillFeedback::noisy(&physics, cfg.feedback_noise_std, rng);
        EnvState { object, hand, physics, goal, skill: SkillState::default(), feedback, step: 0, done: false, episode }
    }

    /// Starts the next episode of this environment's stream.
    pub fn reset(&mut self) -> &EnvState {
        let ep = self.state.episode + 1;
        self.state = Self::fresh_state(&self.config, &mut self.rng, ep);
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Overrides the episode goal (used by scripted evaluations).
    pub fn set_goal(&mut self, goal: UnitQuat) {
        self.state.goal = goal;
    }

    pub fn distance(&self) -> f64 {
        geodesic_distance(&self.state.object.q, &self.state.goal)
    }

    /// Object pose corrupted by the configured observation noise.
    pub fn observe(&mut self) -> ObservedPose {
        let n = self.config.obs_noise;
        let o = &self.state.object;
        let mut p = o.p;
        if n.pos_std > 0.0 {
            for v in p.iter_mut() {
                *v += n.pos_std * self.obs_rng.sample::<f64, _>(StandardNormal);
            }
        }
        let q = if n.rot_std > 0.0 { sample_rotation_noise(&mut self.obs_rng, n.rot_std) * o.q } else { o.q };
        ObservedPose { p, q }
    }

    pub fn step(&mut self, cmd: &SkillCommand) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::EpisodeFinished);
        }
        let cfg = &*self.config;
        let rng = &mut self.rng;
        let st = &mut self.state;
        let out = skill_step(cfg, &mut st.skill, &st.physics, cmd, rng)?;

        let mut target = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            target[j] = out.a_skill[j] + cmd.residual[j];
        }
        let dt = cfg.dt_ctrl();
        let prev_theta = st.hand.theta;
        let (mut hand, torque) = joint_dynamics_step(&st.hand, &target, &cfg.joints, dt)?;
        if out.slip && (cfg.grasp.slip_jolt_std > 0.0 || cfg.grasp.slip_drag != 0.0) {
            let lim = cfg.joints.limit;
            let jr = j_res();
            for j in 0..NUM_JOINTS {
                let drag: f64 = (0..3).map(|k| jr[k][j] * out.slip_rotation[k]).sum::<f64>() * cfg.grasp.slip_drag;
                let jolt = if cfg.grasp.slip_jolt_std > 0.0 {
                    cfg.grasp.slip_jolt_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let th = hand.theta[j] + drag + jolt;
                hand.theta[j] = th.clamp(-lim, lim);
                hand.theta_dot[j] = (hand.theta[j] - prev_theta[j]) / dt;
            }
        }
        st.hand = hand;

        // Object pose: rotation split evenly over the substeps with OU drift
        // of the position toward the palm point.
        let n = cfg.substeps as f64;
        let sub_q = UnitQuat::from_rotation_vector(scale(out.delta_q.to_rotation_vector(), 1.0 / n));
        let p_start = st.object.p;
        let sigma = st.physics.pos_noise_std / n.sqrt();
        let mut q = st.object.q;
        let mut p = p_start;
        for _ in 0..cfg.substeps {
            q = sub_q.compose(&q);
            if st.physics.pos_noise_std > 0.0 {
                for i in 0..3 {
                    let noise: f64 = rng.sample(StandardNormal);
                    p[i] += -(OU_THETA / n) * (p[i] - cfg.palm_center[i]) + sigma * noise;
                }
            }
        }
        if out.delta_q == UnitQuat::IDENTITY {
            q = st.object.q;
        }
        p = add3(&p, &out.delta_p);
        let v = scale(sub3(&p, &p_start), 1.0 / dt);
        st.object = ObjectState { p, q, v };
        st.feedback = out.z;
        st.step += 1;

        let distance = geodesic_distance(&q, &st.goal);
        let dropped = norm3(&sub3(&p, &cfg.palm_center)) > cfg.drop_threshold;
        let success = !dropped && success_check(&st.object, &st.goal, cmd.axis, cfg.success_threshold);
        let false_stop = cfg.stop_terminates && cmd.axis.is_stop() && !success && !dropped;
        let timeout = !success && !dropped && !false_stop && st.step >= cfg.horizon;
        let done = success || dropped || false_stop || timeout;
        st.done = done;
        let reward = compute_reward(distance, success, &cfg.reward);
        Ok(StepResult {
            reward,
            done,
            info: StepInfo {
                object: st.object,
                hand: st.hand,
                z: st.feedback,
                torque,
                distance,
                success,
                dropped,
                false_stop,
                timeout,
                slip: out.slip,
                grasp_lost: out.grasp_lost,
                step: st.step,
            },
        })
    }
}

fn scale(v: Vec3, s: f64) -> Vec3 {
    [v[0] * s, v[1] * s, v[2] * s]
}
