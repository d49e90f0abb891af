//! The generation loop: pick a source demo, replay its segments as DMPs
//! whose goals follow the live reference objects, keep the successes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dmp::{fit_segment, DmpConfig, DmpError, DmpParams, OrientationChart, RolloutState, SingularBasis};
use crate::expert::varied_object;
use crate::math;
use crate::scene::{
    apply_perturbation, eval_predicate, sample_initial_state, step, Attachment, Command, ControllerModel, Gripper,
    ObjectId, PerturbationEvent, PerturbationSchedule, PredicateLatch, SceneError, SceneState, TaskSpec,
};
use crate::se3::{relative_target, retarget, Pose};
use crate::segment::{segment_demo, Demonstration, SegmentError, SubtaskSegment};

/// A source demonstration together with its segment annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDemo {
    pub demo: Demonstration,
    pub segments: Vec<SubtaskSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDataset {
    pub task_id: String,
    pub demos: Vec<SourceDemo>,
}

impl SourceDataset {
    /// Segments each demo with the spec's completion predicates.
    pub fn from_demos(spec: &TaskSpec, demos: Vec<Demonstration>) -> Result<Self, DatagenError> {
        let demos = demos
            .into_iter()
            .map(|demo| {
                let segments = segment_demo(&demo, spec)?;
                Ok(SourceDemo { demo, segments })
            })
            .collect::<Result<Vec<_>, SegmentError>>()?;
        let src = SourceDataset { task_id: spec.name.clone(), demos };
        src.validate(spec)?;
        Ok(src)
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn validate(&self, spec: &TaskSpec) -> Result<(), DatagenError> {
        if self.demos.is_empty() {
            return Err(DatagenError::EmptySource);
        }
        for d in &self.demos {
            if d.demo.task_id != spec.name || self.task_id != spec.name {
                return Err(DatagenError::TaskMismatch { expected: spec.name.clone(), found: d.demo.task_id.clone() });
            }
            d.demo.validate(spec)?;
            let mut next = 0;
            for (i, s) in d.segments.iter().enumerate() {
                let ok = s.subtask_index == i
                    && s.step_range.start == next
                    && !s.is_empty()
                    && s.gripper_track.len() == s.len()
                    && s.reference_object
                        == spec.subtasks.get(i).map_or(s.reference_object.clone(), |t| t.reference_object.clone());
                if !ok {
                    return Err(SegmentError::InvalidBoundary("segments do not partition the demo").into());
                }
                next = s.step_range.end;
            }
            if d.segments.len() != spec.subtasks.len() || next != d.demo.len() {
                return Err(SegmentError::SubtaskCountMismatch {
                    expected: spec.subtasks.len(),
                    got: d.segments.len(),
                }
                .into());
            }
        }
        Ok(())
    }
}

/// Everything generation needs from one demo segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSegment {
    pub reference_object: ObjectId,
    pub params: DmpParams,
    /// End-effector goal in the reference object's frame.
    pub relative: Pose,
    pub gripper_track: Vec<Gripper>,
}

impl PreparedSegment {
    /// Number of control steps the segment is executed for.
    pub fn n_commands(&self) -> usize {
        self.params.n_steps - 1
    }
}

/// A source dataset with every segment fitted once. Fitting is
/// deterministic, so caching per (demo, segment) changes nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSource {
    pub source: SourceDataset,
    pub segments: Vec<Vec<PreparedSegment>>,
    pub warnings: Vec<(usize, usize, SingularBasis)>,
}

impl PreparedSource {
    pub fn new(source: SourceDataset, spec: &TaskSpec, config: &DmpConfig) -> Result<Self, DatagenError> {
        spec.validate()?;
        source.validate(spec)?;
        let mut segments = Vec::with_capacity(source.len());
        let mut warnings = Vec::new();
        for (d, sd) in source.demos.iter().enumerate() {
            let cfg = DmpConfig { dt: sd.demo.dt, ..*config };
            let last = sd.demo.len() - 1;
            let mut prepared = Vec::with_capacity(sd.segments.len());
            for (s, seg) in sd.segments.iter().enumerate() {
                // The boundary sample closes the segment, so a segment of P
                // steps is executed as P transitions (one fewer at demo end).
                let end = seg.step_range.end.min(last);
                let poses: Vec<Pose> = sd.demo.steps[seg.step_range.start..=end].iter().map(|st| st.ee_pose).collect();
                let fit =
                    fit_segment(&poses, &cfg).map_err(|error| DatagenError::Dmp { demo: d, segment: s, error })?;
                let goal_step = &sd.demo.steps[end];
                let obj = goal_step.object_poses[&seg.reference_object];
                warnings.extend(fit.singular.iter().map(|w| (d, s, *w)));
                prepared.push(PreparedSegment {
                    reference_object: seg.reference_object.clone(),
                    params: fit.params,
                    relative: relative_target(&obj, &goal_step.ee_pose),
                    gripper_track: seg.gripper_track.clone(),
                });
            }
            segments.push(prepared);
        }
        Ok(PreparedSource { source, segments, warnings })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    #[default]
    First,
    /// Demo whose varied object's initial yaw is closest to the scene's.
    Orientation,
}

/// Yaw differences closer than this count as a tie.
const YAW_TIE: f64 = 1e-9;

/// Chooses the source demo to replay in `state`. Ties go to the lower index.
pub fn select_demo(src: &SourceDataset, spec: &TaskSpec, state: &SceneState, strategy: SelectionStrategy) -> usize {
    match strategy {
        SelectionStrategy::First => 0,
        SelectionStrategy::Orientation => {
            let id = varied_object(spec);
            let Some(now) = state.object_pose(id).map(|p| p.orientation().yaw()) else { return 0 };
            let mut best = (f64::INFINITY, 0);
            for (i, d) in src.demos.iter().enumerate() {
                let Some(pose) = d.demo.steps.first().and_then(|s| s.object_poses.get(id)) else { continue };
                let diff = math::wrap_angle(now - pose.orientation().yaw()).abs();
                if diff < best.0 - YAW_TIE {
                    best = (diff, i);
                }
            }
            best.1
        }
    }
}

/// Per-trial generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub variant: String,
    pub strategy: SelectionStrategy,
    pub perturbation: Option<PerturbationSchedule>,
    pub controller: ControllerModel,
}

impl GenerationConfig {
    pub fn new(variant: &str) -> Self {
        GenerationConfig {
            variant: String::from(variant),
            strategy: SelectionStrategy::First,
            perturbation: None,
            controller: ControllerModel::default(),
        }
    }
}

/// Scene state in a compact, spec-ordered form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub ee_pose: Pose,
    pub gripper: Gripper,
    /// In the order of [`GenerationRecord::objects`].
    pub object_poses: Vec<Pose>,
    /// Index of the held object.
    pub attached: Option<usize>,
}

impl Snapshot {
    pub fn capture(objects: &[ObjectId], state: &SceneState) -> Self {
        Snapshot {
            ee_pose: state.ee_pose,
            gripper: state.gripper,
            object_poses: objects.iter().map(|id| state.object_poses[id]).collect(),
            attached: state.attached_object().and_then(|a| objects.iter().position(|id| id == a)),
        }
    }

    /// Rebuilds enough of a scene state to evaluate predicates on.
    pub fn to_scene_state(&self, objects: &[ObjectId], step: usize) -> SceneState {
        let object_poses: BTreeMap<ObjectId, Pose> =
            objects.iter().cloned().zip(self.object_poses.iter().copied()).collect();
        let attached = self.attached.map(|i| Attachment {
            object: objects[i].clone(),
            relative: self.ee_pose.inverse().compose(&self.object_poses[i]),
        });
        SceneState {
            ee_pose: self.ee_pose,
            gripper: self.gripper,
            object_poses,
            attached,
            supports: BTreeMap::new(),
            step,
        }
    }
}

/// One control step of a trial: the command, the goal it was computed
/// from, and the scene after executing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub state: Snapshot,
    pub command: Command,
    /// Live DMP goal, retargeted from the reference object's current pose.
    pub goal: Pose,
    /// Canonical phase after the DMP step.
    pub phase: f64,
    pub subtask: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    /// Reset sampling could not place the objects.
    CrowdedScene,
    /// Subtask `subtask` had not completed when its segment ended.
    SubtaskIncomplete {
        subtask: usize,
        label: String,
    },
    /// A live goal left the orientation chart of its segment.
    OrientationChart {
        subtask: usize,
    },
    SuccessPredicateFalse,
    HorizonExceeded,
}

impl FailureReason {
    pub fn label(&self) -> &str {
        match self {
            FailureReason::CrowdedScene => "crowded-scene",
            FailureReason::SubtaskIncomplete { label, .. } => label,
            FailureReason::OrientationChart { .. } => "orientation-chart",
            FailureReason::SuccessPredicateFalse => "success-false",
            FailureReason::HorizonExceeded => "horizon-exceeded",
        }
    }

    /// Subtask the trial was in when it failed, if any.
    pub fn subtask(&self) -> Option<usize> {
        match self {
            FailureReason::SubtaskIncomplete { subtask, .. } | FailureReason::OrientationChart { subtask } => {
                Some(*subtask)
            }
            _ => None,
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subtask() {
            Some(i) => write!(f, "{} (subtask {i})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure(FailureReason),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub seed: u64,
    pub variant: String,
    pub selected_demo: usize,
    pub objects: Vec<ObjectId>,
    pub initial: Snapshot,
    pub log: Vec<StepLog>,
    pub perturbations: Vec<PerturbationEvent>,
    pub completion_steps: Vec<Option<usize>>,
    pub outcome: Outcome,
}

impl GenerationRecord {
    /// Scene after the last logged step.
    pub fn final_state(&self) -> SceneState {
        match self.log.last() {
            Some(l) => l.state.to_scene_state(&self.objects, self.log.len()),
            None => self.initial.to_scene_state(&self.objects, 0),
        }
    }
}

/// Result line of one attempt, kept for every attempt including failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub selected_demo: usize,
    pub outcome: Outcome,
}

/// Runs one trial with a scene sampled from `seed`.
pub fn generate_trial(
    prepared: &PreparedSource,
    spec: &TaskSpec,
    config: &GenerationConfig,
    seed: u64,
) -> GenerationRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sample_initial_state(spec, &config.variant, &mut rng) {
        Ok(initial) => execute_trial(prepared, spec, config, seed, initial, &mut rng),
        Err(_) => GenerationRecord {
            seed,
            variant: config.variant.clone(),
            selected_demo: 0,
            initial: Snapshot {
                ee_pose: spec.home_pose,
                gripper: Gripper::Open,
                object_poses: Vec::new(),
                attached: None,
            },
            objects: Vec::new(),
            log: Vec::new(),
            perturbations: Vec::new(),
            completion_steps: alloc::vec![None; spec.subtasks.len()],
            outcome: Outcome::Failure(FailureReason::CrowdedScene),
        },
    }
}

/// Runs one trial from a given initial scene; `rng` drives perturbations.
pub fn execute_trial(
    prepared: &PreparedSource,
    spec: &TaskSpec,
    config: &GenerationConfig,
    seed: u64,
    initial: SceneState,
    rng: &mut ChaCha8Rng,
) -> GenerationRecord {
    let objects: Vec<ObjectId> = spec.object_ids().cloned().collect();
    let selected = select_demo(&prepared.source, spec, &initial, config.strategy);
    let mut record = GenerationRecord {
        seed,
        variant: config.variant.clone(),
        selected_demo: selected,
        initial: Snapshot::capture(&objects, &initial),
        objects,
        log: Vec::new(),
        perturbations: Vec::new(),
        completion_steps: Vec::new(),
        outcome: Outcome::Success,
    };
    let mut latch = PredicateLatch::new(spec.subtasks.len());
    let outcome = run_segments(prepared, spec, config, selected, initial, rng, &mut latch, &mut record);
    record.completion_steps = latch.completion_steps().to_vec();
    record.outcome = outcome;
    record
}

#[allow(clippy::too_many_arguments)]
fn run_segments(
    prepared: &PreparedSource,
    spec: &TaskSpec,
    config: &GenerationConfig,
    selected: usize,
    mut state: SceneState,
    rng: &mut ChaCha8Rng,
    latch: &mut PredicateLatch,
    record: &mut GenerationRecord,
) -> Outcome {
    let fail = Outcome::Failure;
    let mut events_left = config.perturbation.as_ref().map_or(0, |p| p.max_events);
    for (i, seg) in prepared.segments[selected].iter().enumerate() {
        let n = seg.n_commands();
        let chart = OrientationChart::new(state.ee_pose.orientation());
        let Ok(start) = chart.pose_to_vec(&state.ee_pose) else {
            return fail(FailureReason::OrientationChart { subtask: i });
        };
        let trigger = match &config.perturbation {
            Some(p) if p.subtask_index == i && events_left > 0 => Some(p.trigger_step(n)),
            _ => None,
        };
        let mut dmp = RolloutState::at_rest(start);
        for k in 0..n {
            let Some(obj) = state.object_pose(&seg.reference_object) else {
                return fail(FailureReason::SuccessPredicateFalse);
            };
            let goal = retarget(&seg.relative, obj);
            let Ok(g) = chart.pose_to_vec(&goal) else {
                return fail(FailureReason::OrientationChart { subtask: i });
            };
            dmp = seg.params.rollout_step(&dmp, &g);
            let command = Command { pose: chart.vec_to_pose(&dmp.y), gripper: seg.gripper_track[k] };
            state = match step(spec, &state, &command, &config.controller) {
                Ok(s) => s,
                Err(_) => return fail(FailureReason::HorizonExceeded),
            };
            if trigger == Some(k) {
                if let Some(p) = &config.perturbation {
                    if let Ok((s, event)) = apply_perturbation(&state, p, rng, i) {
                        state = s;
                        record.perturbations.push(event);
                        events_left -= 1;
                    }
                }
            }
            if let Err(SceneError::UnknownObject(_)) = latch.update(spec, &state, state.step) {
                return fail(FailureReason::SuccessPredicateFalse);
            }
            record.log.push(StepLog {
                state: Snapshot::capture(&record.objects, &state),
                command,
                goal,
                phase: dmp.x,
                subtask: i,
            });
        }
        if !latch.is_complete(i) {
            let label = String::from(spec.subtasks[i].predicate.miss_label());
            return fail(FailureReason::SubtaskIncomplete { subtask: i, label });
        }
    }
    let success = spec.success.iter().all(|p| eval_predicate(p, spec, &state).unwrap_or(false));
    if success {
        Outcome::Success
    } else {
        fail(FailureReason::SuccessPredicateFalse)
    }
}

/// Successful trials of one campaign plus the outcome of every attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDataset {
    pub task_id: String,
    pub variant: String,
    pub seed0: u64,
    pub records: Vec<GenerationRecord>,
    pub attempts: Vec<TrialOutcome>,
}

impl GeneratedDataset {
    pub fn new(task_id: &str, variant: &str, seed0: u64) -> Self {
        GeneratedDataset {
            task_id: String::from(task_id),
            variant: String::from(variant),
            seed0,
            records: Vec::new(),
            attempts: Vec::new(),
        }
    }

    pub fn n_attempts(&self) -> usize {
        self.attempts.len()
    }

    pub fn n_successes(&self) -> usize {
        self.records.len()
    }

    /// Successes over attempts; zero when nothing was attempted.
    pub fn dgr(&self) -> f64 {
        if self.attempts.is_empty() {
            0.0
        } else {
            self.records.len() as f64 / self.attempts.len() as f64
        }
    }

    /// Adds one attempt, in seed order. Returns true once `target` successes are in.
    pub fn push(&mut self, record: GenerationRecord, target: usize) -> bool {
        self.attempts.push(TrialOutcome {
            seed: record.seed,
            selected_demo: record.selected_demo,
            outcome: record.outcome.clone(),
        });
        if record.outcome.is_success() {
            self.records.push(record);
        }
        self.records.len() >= target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatagenError {
    InvalidTarget,
    EmptySource,
    TaskMismatch {
        expected: String,
        found: String,
    },
    Segment(SegmentError),
    Scene(SceneError),
    Dmp {
        demo: usize,
        segment: usize,
        error: DmpError,
    },
    /// Attempts ran out first; the partial dataset is attached.
    TargetUnreachable(Box<GeneratedDataset>),
}

impl fmt::Display for DatagenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatagenError::InvalidTarget => f.write_str("success target must be at least 1"),
            DatagenError::EmptySource => f.write_str("source dataset has no demonstrations"),
            DatagenError::TaskMismatch { expected, found } => {
                write!(f, "source demo is for task `{found}`, expected `{expected}`")
            }
            DatagenError::Segment(e) => write!(f, "{e}"),
            DatagenError::Scene(e) => write!(f, "{e}"),
            DatagenError::Dmp { demo, segment, error } => write!(f, "demo {demo}, segment {segment}: {error}"),
            DatagenError::TargetUnreachable(ds) => {
                write!(f, "reached {} attempts with {} successes", ds.n_attempts(), ds.n_successes())
            }
        }
    }
}

impl core::error::Error for DatagenError {}

impl From<SegmentError> for DatagenError {
    fn from(e: SegmentError) -> Self {
        DatagenError::Segment(e)
    }
}

impl From<SceneError> for DatagenError {
    fn from(e: SceneError) -> Self {
        DatagenError::Scene(e)
    }
}

/// Default cap on attempts: a hundred per requested success.
pub fn default_max_attempts(target: usize) -> usize {
    target.saturating_mul(100)
}

/// Runs trials with seeds `seed0, seed0 + 1, ...` until `target`
/// successes or `max_attempts` attempts.
pub fn generate_dataset(
    prepared: &PreparedSource,
    spec: &TaskSpec,
    config: &GenerationConfig,
    target: usize,
    seed0: u64,
    max_attempts: Option<usize>,
) -> Result<GeneratedDataset, DatagenError> {
    check_campaign(spec, config, target)?;
    let max = max_attempts.unwrap_or_else(|| default_max_attempts(target));
    let mut ds = GeneratedDataset::new(&spec.name, &config.variant, seed0);
    for a in 0..max as u64 {
        if ds.push(generate_trial(prepared, spec, config, seed0.wrapping_add(a)), target) {
            return Ok(ds);
        }
    }
    Err(DatagenError::TargetUnreachable(Box::new(ds)))
}

/// Preconditions shared by sequential and parallel campaigns.
pub fn check_campaign(spec: &TaskSpec, config: &GenerationConfig, target: usize) -> Result<(), DatagenError> {
    if target == 0 {
        return Err(DatagenError::InvalidTarget);
    }
    spec.validate()?;
    spec.variant(&config.variant)?;
    if let Some(p) = &config.perturbation {
        p.validate()?;
        spec.object(&p.target_object).ok_or_else(|| SceneError::UnknownObject(p.target_object.clone()))?;
    }
    if !config.controller.is_valid() {
        return Err(SceneError::InvalidSpec("controller gain, caps and dt must be positive").into());
    }
    Ok(())
}

/// One line of a DGR table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgrRow {
    pub variant: String,
    pub attempts: usize,
    pub successes: usize,
}

impl DgrRow {
    /// DGR in tenths of a percent, rounded half up on the exact ratio.
    pub fn per_mille(&self) -> u64 {
        let (s, a) = (self.successes as u64, self.attempts as u64);
        (2000 * s + a) / (2 * a)
    }

    /// e.g. `95.0%`.
    pub fn percent(&self) -> String {
        let t = self.per_mille();
        format!("{}.{}%", t / 10, t % 10)
    }
}

/// Per-variant totals, rows with no attempts left out.
pub fn dgr_report<'a>(datasets: impl IntoIterator<Item = &'a GeneratedDataset>) -> Vec<DgrRow> {
    let mut by_variant: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ds in datasets {
        let e = by_variant.entry(ds.variant.as_str()).or_default();
        e.0 += ds.n_attempts();
        e.1 += ds.n_successes();
    }
    by_variant
        .into_iter()
        .filter(|(_, (a, _))| *a > 0)
        .map(|(v, (attempts, successes))| DgrRow { variant: String::from(v), attempts, successes })
        .collect()
}
