//! Splitting a demonstration into object-centric subtask segments.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::scene::{eval_predicate, Gripper, ObjectId, SceneError, SceneState, TaskSpec};
use crate::se3::Pose;

/// Relative slack allowed on the demo's sampling period.
const DT_TOL: f64 = 1e-9;

/// One recorded state of a demonstration.
///
/// `gripper` is the gripper state after the action that led here, so a
/// grasp shows up as the first step with `Closed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub t: f64,
    pub ee_pose: Pose,
    pub gripper: Gripper,
    pub object_poses: BTreeMap<ObjectId, Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub task_id: String,
    pub dt: f64,
    pub steps: Vec<DemoStep>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Scene state at step `k`, with attachment inferred from proximity.
    pub fn scene_state(&self, spec: &TaskSpec, k: usize) -> SceneState {
        let s = &self.steps[k];
        SceneState::from_observation(spec, s.ee_pose, s.gripper, s.object_poses.clone(), k)
    }

    pub fn validate(&self, spec: &TaskSpec) -> Result<(), SegmentError> {
        if self.steps.len() < 2 {
            return Err(SegmentError::InvalidDemo("fewer than two steps"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SegmentError::InvalidDemo("dt must be positive"));
        }
        for w in self.steps.windows(2) {
            let gap = w[1].t - w[0].t;
            if gap.is_nan() || gap <= 0.0 {
                return Err(SegmentError::InvalidDemo("timestamps must be strictly increasing"));
            }
            if (gap - self.dt).abs() > DT_TOL * self.dt.max(1.0) {
                return Err(SegmentError::InvalidDemo("timestamps must be uniformly spaced by dt"));
            }
        }
        for (k, step) in self.steps.iter().enumerate() {
            if let Some(id) = spec.object_ids().find(|id| !step.object_poses.contains_key(*id)) {
                return Err(SegmentError::MissingObject { step: k, object: id.clone() });
            }
        }
        Ok(())
    }
}

/// Contiguous slice of a demonstration handled relative to one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSegment {
    pub subtask_index: usize,
    pub reference_object: ObjectId,
    pub step_range: Range<usize>,
    /// Gripper command issued at each step of the segment.
    pub gripper_track: Vec<Gripper>,
}

impl SubtaskSegment {
    pub fn len(&self) -> usize {
        self.step_range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_range.is_empty()
    }

    /// Gripper command for step `k` of a segment executed over `n` steps,
    /// by nearest index.
    pub fn gripper_at(&self, k: usize, n: usize) -> Gripper {
        let len = self.gripper_track.len();
        let j = if n == len || n <= 1 { k } else { (k * (len - 1) + (n - 1) / 2) / (n - 1) };
        self.gripper_track[j.min(len - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentError {
    InvalidDemo(&'static str),
    MissingObject {
        step: usize,
        object: ObjectId,
    },
    PredicateNeverFires(usize),
    /// Subtask `later` already held when subtask `earlier` completed.
    OutOfOrder {
        earlier: usize,
        later: usize,
        step: usize,
    },
    EmptySegment(usize),
    InvalidBoundary(&'static str),
    SubtaskCountMismatch {
        expected: usize,
        got: usize,
    },
    Scene(SceneError),
}

impl fmt::Display for SegmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentError::InvalidDemo(why) => write!(f, "invalid demonstration: {why}"),
            SegmentError::MissingObject { step, object } => write!(f, "object `{object}` missing at step {step}"),
            SegmentError::PredicateNeverFires(i) => write!(f, "completion predicate of subtask {i} never fires"),
            SegmentError::OutOfOrder { earlier, later, step } => {
                write!(f, "subtask {later} already complete when subtask {earlier} completed at step {step}")
            }
            SegmentError::EmptySegment(i) => write!(f, "subtask {i} has an empty segment"),
            SegmentError::InvalidBoundary(why) => write!(f, "invalid boundary: {why}"),
            SegmentError::SubtaskCountMismatch { expected, got } => {
                write!(f, "expected {expected} segments, got {got}")
            }
            SegmentError::Scene(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SegmentError {}

impl From<SceneError> for SegmentError {
    fn from(e: SceneError) -> Self {
        SegmentError::Scene(e)
    }
}

fn build_segments(demo: &Demonstration, spec: &TaskSpec, ends: &[usize]) -> Vec<SubtaskSegment> {
    let last = demo.steps.len() - 1;
    let mut start = 0;
    let mut out = Vec::with_capacity(ends.len());
    for (i, &end) in ends.iter().enumerate() {
        let gripper_track = (start..end).map(|k| demo.steps[(k + 1).min(last)].gripper).collect();
        out.push(SubtaskSegment {
            subtask_index: i,
            reference_object: spec.subtasks[i].reference_object.clone(),
            step_range: start..end,
            gripper_track,
        });
        start = end;
    }
    out
}

/// Splits `demo` at the steps where each subtask's completion predicate
/// first holds. The firing step opens the next segment; the last segment
/// runs to the end of the demo.
pub fn segment_demo(demo: &Demonstration, spec: &TaskSpec) -> Result<Vec<SubtaskSegment>, SegmentError> {
    demo.validate(spec)?;
    let m = spec.subtasks.len();
    let mut ends = Vec::with_capacity(m);
    let mut k = 0;
    for i in 0..m - 1 {
        let pred = &spec.subtasks[i].predicate;
        let fired = loop {
            if k >= demo.len() {
                return Err(SegmentError::PredicateNeverFires(i));
            }
            if eval_predicate(pred, spec, &demo.scene_state(spec, k))? {
                break k;
            }
            k += 1;
        };
        let next = &spec.subtasks[i + 1].predicate;
        if eval_predicate(next, spec, &demo.scene_state(spec, fired))? {
            return Err(SegmentError::OutOfOrder { earlier: i, later: i + 1, step: fired });
        }
        if fired <= ends.last().copied().unwrap_or(0) {
            return Err(SegmentError::EmptySegment(i));
        }
        ends.push(fired);
    }
    // The final subtask must complete somewhere after the last boundary.
    let from = ends.last().copied().unwrap_or(0);
    let last_pred = &spec.subtasks[m - 1].predicate;
    let mut completes = false;
    for k in from..demo.len() {
        if eval_predicate(last_pred, spec, &demo.scene_state(spec, k))? {
            completes = true;
            break;
        }
    }
    if !completes {
        return Err(SegmentError::PredicateNeverFires(m - 1));
    }
    if from >= demo.len() {
        return Err(SegmentError::EmptySegment(m - 1));
    }
    ends.push(demo.len());
    Ok(build_segments(demo, spec, &ends))
}

/// Segments `demo` at explicit boundaries, one per subtask transition.
pub fn annotate_manual(
    demo: &Demonstration,
    spec: &TaskSpec,
    boundaries: &[usize],
) -> Result<Vec<SubtaskSegment>, SegmentError> {
    demo.validate(spec)?;
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SegmentError::InvalidBoundary("boundaries must be strictly increasing"));
    }
    if boundaries.iter().any(|&b| b == 0 || b >= demo.len()) {
        return Err(SegmentError::InvalidBoundary("boundaries must lie strictly inside the demo"));
    }
    if boundaries.len() + 1 != spec.subtasks.len() {
        return Err(SegmentError::SubtaskCountMismatch { expected: spec.subtasks.len(), got: boundaries.len() + 1 });
    }
    let mut ends: Vec<usize> = boundaries.to_vec();
    ends.push(demo.len());
    Ok(build_segments(demo, spec, &ends))
}
