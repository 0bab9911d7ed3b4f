//! Evaluation of joint multi-agent trajectory predictions at the level of
//! interaction modes.
//!
//! The pipeline picks safety-critical agent pairs whose paths cross
//! ([`filter`]), labels each pair's interaction by the winding of the relative
//! position vector ([`homotopy`]), enumerates which labels are still reachable
//! by braking or accelerating along the recorded paths ([`rollout`],
//! [`collision`]) and scores predictions against that ([`metrics`]).

pub mod baselines;
pub mod collision;
pub mod filter;
pub mod homotopy;
pub mod io;
pub mod metrics;
pub mod path;
pub mod pipeline;
pub mod rollout;
pub mod types;

pub use filter::{classify_pair, filter_scene, CriticalPair, Rejection};
pub use homotopy::{homotopy_class, winding_angle, ClassSet, HomotopyClass};
pub use metrics::{aggregate, frame_flags, pair_time_metrics, AggregateReport, FrameModeFlags, PairMetrics};
pub use rollout::{interaction_timeline, InteractionTimeline};
pub use types::{validate_scene, Agent, EvalConfig, JointPredictionSet, Scene, Trajectory, Vec2};
