//! Skeletal motion quality assessment.
//!
//! A student's motion is compared with a teacher reference along three axes:
//! how unambiguously it lands on the intended vocabulary item (confusion),
//! how far it sits from a temporally smoothed version of itself (smoothness),
//! and how well its joint angular velocities align with the teacher's under
//! dynamic time warping (alignment).

pub mod assessment;
pub mod embedding;
pub mod error;
pub mod evalstats;
pub mod kinematics;
pub mod motion_io;
pub mod refdb;
pub mod smoothing;
pub mod synthetic;

pub use error::{Error, Result};
pub use kinematics::{Pose, Quat, SkeletonTopology, Vec3};
pub use motion_io::MotionSequence;
pub use assessment::{assess, AssessConfig, AssessmentReport, ClusterModel, ConfusionResult, GradientSequence, AlignmentResult};
pub use embedding::{EmbeddingWeights, ProjectionBasis, SegmentEmbedding};
pub use refdb::{BuildConfig, ReferenceDatabase};
pub use smoothing::{SmoothingConfig, SmoothnessResult};
