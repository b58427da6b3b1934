//! Softmax policy-gradient learners.

pub mod gradient;
pub mod online;
pub mod regenerative;
pub mod schedule;
pub mod softmax;

pub use gradient::{
    exact_gradient, finite_difference_gradient, gradient_estimate_check, regenerative_gradient_estimate, ExactGradient,
    GradientReport, RegenerativeEstimate,
};
pub use online::{learn_online, CurvePoint, LearnerConfig, LearnerState, LearningRun, OnlineLearner};
pub use regenerative::{cycle_gradient, learn_regenerative, RegenerativeLearner};
pub use schedule::{ScheduleMode, StepSchedule};
pub use softmax::{action_distribution, score_vector, ActionDistribution, ParamLayout, PolicyParams, ScoreVector};
