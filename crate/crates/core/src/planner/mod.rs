//! Hierarchical planner: observation assembly, actor-critic policy, reward,
//! greedy baseline and PPO training.

mod heuristic;
mod obs;
mod policy;
mod ppo;
mod reward;
mod train;

pub use heuristic::heuristic_plan;
pub use obs::{
    assemble_observation, assemble_observation_into, ObsConfig, PlannerHistory, ACTION_DIM, DELTA_FRAME_DIM,
    STATE_FRAME_DIM,
};
pub use policy::{PlannerAction, PlannerPolicy, PolicyConfig, POLICY_OUT};
pub use ppo::{gae_advantages, normalize, ppo_loss, ppo_update, LossParts, Minibatch, PpoConfig, PpoStats, RolloutBuffer};
pub use reward::{compute_reward, RewardConfig};
pub use train::{load_policy, save_policy, train_planner, CurveRow, TrainConfig, TrainOutcome};
