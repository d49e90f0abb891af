//! Demonstration synthesis with Dynamic Movement Primitives.
//!
//! A source demonstration is split into object-centric subtask segments,
//! each segment is encoded as a 6-DoF DMP, and new trajectories are rolled
//! out in freshly sampled scenes while the DMP goal tracks the live pose of
//! the segment's reference object.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! loading and the command line live in the `dmgen` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod datagen;
pub mod dmp;
pub mod expert;
pub mod scene;
pub mod se3;
pub mod segment;

pub use datagen::{
    dgr_report, execute_trial, generate_dataset, generate_trial, select_demo, DatagenError, DgrRow, FailureReason,
    GeneratedDataset, GenerationConfig, GenerationRecord, Outcome, PreparedSource, SelectionStrategy, Snapshot,
    SourceDataset, SourceDemo, StepLog, TrialOutcome,
};
pub use dmp::{fit_segment, BasisLayout, DmpConfig, DmpError, DmpParams, RolloutState};
pub use expert::{synthesize_demos, ExpertConfig, ExpertError};
pub use scene::{
    eval_predicate, Command, ControllerModel, Gripper, ObjectId, PerturbationEvent, PerturbationSchedule, Predicate,
    Region, SceneError, SceneState, TaskSpec,
};
pub use se3::{pose_error, relative_target, retarget, Pose, PoseError, Quat};
pub use segment::{annotate_manual, segment_demo, DemoStep, Demonstration, SegmentError, SubtaskSegment};
