//! Recursive object pose estimator.
//!
//! Poses are tracked in the canonical frame of the first observation: the
//! rotation is `q · q0⁻¹` and the position is `p − p0`. Each control step the
//! network maps a window of per-step features to a one-step relative
//! transform, which is integrated onto the previous estimate.

mod data;
mod model;
mod train;

pub use data::{
    collect_dataset, needs_reset, CollectConfig, CollectStats, EstimatorDataset, PoseSource, Segment,
};
pub use model::{
    assemble_feature, gram_schmidt, gram_schmidt_backward, integrate_pose, Estimator, EstimatorConfig,
    EstimatorTracker, LossAnchor, PoseEstimate, Sample, DP_SCALE, FEATURE_DIM, POS_SCALE,
};
pub use train::{
    evaluate_estimator, load_estimator, run_estimator_rounds, save_estimator, train_estimator,
    write_estimator_report, EstimatorEpisodeReport, EstimatorTrainConfig, RoundsConfig, RoundsOutcome,
};
