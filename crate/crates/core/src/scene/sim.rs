use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gripper, ObjectId, ObjectSpec, Region, SceneError, TaskSpec};
use crate::math;
use crate::se3::{Pose, Quat};

/// Reset attempts before a scene is declared too crowded.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Vertical slack when deciding whether a released object rests on another.
pub const SUPPORT_Z_TOL: f64 = 0.015;

/// An object held by the gripper, with its pose in the end-effector frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: ObjectId,
    pub relative: Pose,
}

/// An object resting on `parent`, with its pose in the parent frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub parent: ObjectId,
    pub relative: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub ee_pose: Pose,
    pub gripper: Gripper,
    pub object_poses: BTreeMap<ObjectId, Pose>,
    pub attached: Option<Attachment>,
    pub supports: BTreeMap<ObjectId, Support>,
    pub step: usize,
}

impl SceneState {
    pub fn object_pose(&self, id: &ObjectId) -> Option<&Pose> {
        self.object_poses.get(id)
    }

    pub fn attached_object(&self) -> Option<&ObjectId> {
        self.attached.as_ref().map(|a| &a.object)
    }

    /// Rebuilds a state from an observation that carries no attachment
    /// information: a closed gripper holds the nearest object whose grasp
    /// point is within the grasp radius.
    pub fn from_observation(
        spec: &TaskSpec,
        ee_pose: Pose,
        gripper: Gripper,
        object_poses: BTreeMap<ObjectId, Pose>,
        step: usize,
    ) -> Self {
        let mut s = SceneState { ee_pose, gripper, object_poses, attached: None, supports: BTreeMap::new(), step };
        if gripper.is_closed() {
            s.attached = nearest_graspable(spec, &s).map(|id| attachment_for(&s, id));
        }
        s
    }
}

/// End-effector command: absolute pose plus binary gripper action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub pose: Pose,
    pub gripper: Gripper,
}

/// First-order-lag tracking controller with per-step caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerModel {
    /// Tracking gain, 1/s. Infinite means the commanded pose is reached in one step.
    pub gain: f64,
    pub max_step_translation: f64,
    pub max_step_rotation: f64,
    /// Control period, seconds.
    pub dt: f64,
}

impl Default for ControllerModel {
    fn default() -> Self {
        ControllerModel { gain: 20.0, max_step_translation: 0.05, max_step_rotation: 0.5, dt: 0.05 }
    }
}

impl ControllerModel {
    pub fn perfect(dt: f64) -> Self {
        ControllerModel {
            gain: f64::INFINITY,
            max_step_translation: f64::INFINITY,
            max_step_rotation: f64::INFINITY,
            dt,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.gain, self.max_step_translation, self.max_step_rotation, self.dt].iter().all(|v| *v > 0.0 && !v.is_nan())
            && self.dt.is_finite()
    }

    /// Fraction of the remaining error removed per step.
    pub fn step_fraction(&self) -> f64 {
        if self.gain.is_infinite() {
            1.0
        } else {
            1.0 - math::exp(-self.gain * self.dt)
        }
    }

    fn track(&self, current: &Pose, target: &Pose) -> Pose {
        let alpha = self.step_fraction();
        let cp = current.position();
        let tp = target.position();
        let position = if cp == tp {
            cp
        } else {
            let err = math::sub(tp, cp);
            let dist = math::norm(err);
            if alpha >= 1.0 && dist <= self.max_step_translation {
                tp
            } else {
                let mut d = alpha * dist;
                if d > self.max_step_translation {
                    d = self.max_step_translation;
                }
                math::add(cp, math::scale(err, d / dist))
            }
        };
        let cq = current.orientation();
        let tq = target.orientation();
        let orientation = if cq == tq {
            cq
        } else {
            let r = (cq.conjugate() * tq).to_rotation_vector();
            let angle = math::norm(r);
            if alpha >= 1.0 && angle <= self.max_step_rotation {
                tq
            } else if angle == 0.0 {
                cq
            } else {
                let a = (alpha * angle).min(self.max_step_rotation);
                cq * Quat::from_rotation_vector(math::scale(r, a / angle))
            }
        };
        Pose::new(position, orientation)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    // Always draw, so the stream does not depend on region sizes.
    let u: f64 = rng.gen();
    if hi > lo {
        lo + (hi - lo) * u
    } else {
        lo
    }
}

fn sample_in<R: Rng + ?Sized>(rng: &mut R, region: &Region) -> [f64; 3] {
    [
        uniform(rng, region.lo[0], region.hi[0]),
        uniform(rng, region.lo[1], region.hi[1]),
        uniform(rng, region.lo[2], region.hi[2]),
    ]
}

/// World-frame half extents of a box rotated about z.
fn world_half_extents(spec: &ObjectSpec, pose: &Pose) -> [f64; 3] {
    let yaw = pose.orientation().yaw();
    let (c, s) = (math::cos(yaw).abs(), math::sin(yaw).abs());
    let h = spec.half_extents;
    [c * h[0] + s * h[1], s * h[0] + c * h[1], h[2]]
}

fn boxes_overlap(a: &ObjectSpec, pa: &Pose, b: &ObjectSpec, pb: &Pose) -> bool {
    let (ha, hb) = (world_half_extents(a, pa), world_half_extents(b, pb));
    let (ca, cb) = (pa.position(), pb.position());
    (0..3).all(|i| (ca[i] - cb[i]).abs() < ha[i] + hb[i])
}

/// Pose of a prismatic link at joint value `q`.
fn joint_pose(spec: &TaskSpec, state_poses: &BTreeMap<ObjectId, Pose>, obj: &ObjectSpec, q: f64) -> Option<Pose> {
    let joint = obj.joint.as_ref()?;
    let parent = state_poses.get(&joint.parent)?;
    let _ = spec;
    let origin = parent.transform_point(joint.offset);
    let axis = parent.orientation().rotate(joint.axis);
    Some(Pose::new(math::add(origin, math::scale(axis, q)), parent.orientation()))
}

/// Samples object placements for `variant`; the end-effector starts at the
/// home pose with the gripper open.
pub fn sample_initial_state<R: Rng + ?Sized>(
    spec: &TaskSpec,
    variant: &str,
    rng: &mut R,
) -> Result<SceneState, SceneError> {
    let placements = spec.variant(variant)?;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut poses = BTreeMap::new();
        for obj in spec.objects.iter().filter(|o| o.joint.is_none()) {
            let placement = placements.get(&obj.id).ok_or_else(|| SceneError::MissingPlacement(obj.id.clone()))?;
            let position = sample_in(rng, &placement.region);
            let yaw = uniform(rng, placement.yaw[0], placement.yaw[1]);
            poses.insert(obj.id.clone(), Pose::new(position, Quat::rotz(yaw)));
        }
        for obj in spec.objects.iter().filter(|o| o.joint.is_some()) {
            let lower = obj.joint.as_ref().map_or(0.0, |j| j.lower);
            let pose = joint_pose(spec, &poses, obj, lower).ok_or_else(|| SceneError::UnknownObject(obj.id.clone()))?;
            poses.insert(obj.id.clone(), pose);
        }
        if !any_overlap(spec, &poses) {
            return Ok(SceneState {
                ee_pose: spec.home_pose,
                gripper: Gripper::Open,
                object_poses: poses,
                attached: None,
                supports: BTreeMap::new(),
                step: 0,
            });
        }
    }
    Err(SceneError::CrowdedScene { attempts: MAX_PLACEMENT_ATTEMPTS })
}

fn any_overlap(spec: &TaskSpec, poses: &BTreeMap<ObjectId, Pose>) -> bool {
    let related = |a: &ObjectSpec, b: &ObjectSpec| {
        a.joint.as_ref().is_some_and(|j| j.parent == b.id) || b.joint.as_ref().is_some_and(|j| j.parent == a.id)
    };
    for (i, a) in spec.objects.iter().enumerate() {
        for b in &spec.objects[i + 1..] {
            if related(a, b) {
                continue;
            }
            if let (Some(pa), Some(pb)) = (poses.get(&a.id), poses.get(&b.id)) {
                if boxes_overlap(a, pa, b, pb) {
                    return true;
                }
            }
        }
    }
    false
}

fn nearest_graspable(spec: &TaskSpec, state: &SceneState) -> Option<ObjectId> {
    let ee = state.ee_pose.position();
    let mut best: Option<(f64, &ObjectId)> = None;
    for obj in &spec.objects {
        let Some(pose) = state.object_poses.get(&obj.id) else { continue };
        let d = math::norm(math::sub(pose.transform_point(obj.grasp_offset), ee));
        if d <= spec.grasp_radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, &obj.id));
        }
    }
    best.map(|(_, id)| id.clone())
}

fn attachment_for(state: &SceneState, id: ObjectId) -> Attachment {
    let obj = state.object_poses[&id];
    Attachment { relative: state.ee_pose.inverse().compose(&obj), object: id }
}

/// Drops a released object onto the highest support under it, or the table.
fn settle(spec: &TaskSpec, state: &mut SceneState, id: &ObjectId) {
    let Some(obj) = spec.object(id) else { return };
    if obj.joint.is_some() {
        return;
    }
    let pose = state.object_poses[id];
    let p = pose.position();
    let bottom = p[2] - obj.half_extents[2];
    let mut best: Option<(f64, &ObjectId)> = None;
    for other in &spec.objects {
        if &other.id == id || state.supports.get(&other.id).is_some_and(|s| &s.parent == id) {
            continue;
        }
        let Some(op) = state.object_poses.get(&other.id) else { continue };
        let local = op.inverse().transform_point(p);
        let top = op.position()[2] + other.half_extents[2];
        let inside = local[0].abs() <= other.half_extents[0] && local[1].abs() <= other.half_extents[1];
        if inside && bottom >= top - SUPPORT_Z_TOL && bottom <= top + SUPPORT_Z_TOL && best.is_none_or(|(t, _)| top > t)
        {
            best = Some((top, &other.id));
        }
    }
    let rest_z = best.map_or(0.0, |(top, _)| top) + obj.half_extents[2];
    let rested = pose.with_position([p[0], p[1], rest_z]);
    state.object_poses.insert(id.clone(), rested);
    if let Some((_, parent)) = best {
        let parent = parent.clone();
        let relative = state.object_poses[&parent].inverse().compose(&rested);
        state.supports.insert(id.clone(), Support { parent, relative });
    }
}

/// Moves every object resting on something in `moved`, transitively.
fn propagate_supports(state: &mut SceneState, mut moved: BTreeSet<ObjectId>) {
    // Support chains are short; bound the passes by the number of relations.
    for _ in 0..=state.supports.len() {
        let mut next = BTreeSet::new();
        for (child, support) in &state.supports {
            if moved.contains(&support.parent) && !moved.contains(child) {
                next.insert(child.clone());
            }
        }
        if next.is_empty() {
            return;
        }
        for child in &next {
            let support = &state.supports[child];
            let pose = state.object_poses[&support.parent].compose(&support.relative);
            state.object_poses.insert(child.clone(), pose);
        }
        moved.extend(next);
    }
}

/// Advances the scene by one control period.
pub fn step(
    spec: &TaskSpec,
    state: &SceneState,
    command: &Command,
    controller: &ControllerModel,
) -> Result<SceneState, SceneError> {
    if state.step >= spec.horizon {
        return Err(SceneError::HorizonExceeded { horizon: spec.horizon });
    }
    let mut s = state.clone();

    if command.gripper != s.gripper {
        s.gripper = command.gripper;
        match command.gripper {
            Gripper::Closed => {
                if let Some(id) = nearest_graspable(spec, &s) {
                    s.supports.remove(&id);
                    s.attached = Some(attachment_for(&s, id));
                }
            }
            Gripper::Open => {
                if let Some(a) = s.attached.take() {
                    settle(spec, &mut s, &a.object);
                    propagate_supports(&mut s, BTreeSet::from([a.object]));
                }
            }
        }
    }

    s.ee_pose = controller.track(&s.ee_pose, &command.pose);

    if s.ee_pose != state.ee_pose {
        if let Some(a) = &s.attached {
            let desired = s.ee_pose.compose(&a.relative);
            let obj = spec.object(&a.object).ok_or_else(|| SceneError::UnknownObject(a.object.clone()))?;
            let pose = match &obj.joint {
                None => desired,
                Some(j) => {
                    let origin = joint_pose(spec, &s.object_poses, obj, 0.0)
                        .ok_or_else(|| SceneError::UnknownObject(j.parent.clone()))?;
                    let axis = s.object_poses[&j.parent].orientation().rotate(j.axis);
                    let q = math::dot(math::sub(desired.position(), origin.position()), axis).clamp(j.lower, j.upper);
                    joint_pose(spec, &s.object_poses, obj, q).unwrap_or(origin)
                }
            };
            let id = a.object.clone();
            s.object_poses.insert(id.clone(), pose);
            propagate_supports(&mut s, BTreeSet::from([id]));
        }
    }

    s.step += 1;
    Ok(s)
}

/// Scripted runtime displacement of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub target_object: ObjectId,
    /// Subtask during whose segment the event fires.
    pub subtask_index: usize,
    /// Position in that segment, as a fraction of its steps.
    pub fraction: f64,
    /// Displacement box, meters, sampled per trial.
    pub displacement: Region,
    /// `[min, max]` yaw change, radians.
    pub yaw_range: [f64; 2],
    pub max_events: u32,
}

impl PerturbationSchedule {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(SceneError::InvalidSpec("perturbation fraction must lie in [0, 1]"));
        }
        if !self.displacement.is_valid()
            || self.yaw_range.iter().any(|v| v.is_nan())
            || self.yaw_range[1] < self.yaw_range[0]
        {
            return Err(SceneError::InvalidSpec("perturbation region must be bounded with non-negative extents"));
        }
        Ok(())
    }

    /// Step within a segment of `segment_len` steps at which the event fires.
    pub fn trigger_step(&self, segment_len: usize) -> usize {
        let k = math::floor(self.fraction * segment_len as f64) as usize;
        k.min(segment_len.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    /// Global step index after which the displacement was applied.
    pub step: usize,
    pub subtask: usize,
    pub object: ObjectId,
    pub delta_position: [f64; 3],
    pub delta_yaw: f64,
    /// The target was held by the gripper, so nothing moved.
    pub suppressed: bool,
}

/// Displaces the schedule's target by a sampled delta, unless it is held.
pub fn apply_perturbation<R: Rng + ?Sized>(
    state: &SceneState,
    schedule: &PerturbationSchedule,
    rng: &mut R,
    subtask: usize,
) -> Result<(SceneState, PerturbationEvent), SceneError> {
    let id = &schedule.target_object;
    let pose = *state.object_pose(id).ok_or_else(|| SceneError::UnknownObject(id.clone()))?;
    let delta = sample_in(rng, &schedule.displacement);
    let delta_yaw = uniform(rng, schedule.yaw_range[0], schedule.yaw_range[1]);
    let suppressed = state.attached_object() == Some(id);
    let event = PerturbationEvent {
        step: state.step,
        subtask,
        object: id.clone(),
        delta_position: delta,
        delta_yaw,
        suppressed,
    };
    if suppressed {
        return Ok((state.clone(), event));
    }
    let mut s = state.clone();
    let moved = Pose::new(math::add(pose.position(), delta), Quat::rotz(delta_yaw) * pose.orientation());
    s.object_poses.insert(id.clone(), moved);
    // A displaced object no longer rests where it was.
    s.supports.remove(id);
    let ids: Vec<ObjectId> = alloc::vec![id.clone()];
    propagate_supports(&mut s, ids.into_iter().collect());
    Ok((s, event))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::builtin;
    use crate::se3::pose_error;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube_scene(cube_at: [f64; 3]) -> (TaskSpec, SceneState) {
        let spec = builtin::stack();
        let mut poses = BTreeMap::new();
        poses.insert(ObjectId::from("red"), Pose::from_translation(cube_at[0], cube_at[1], cube_at[2]));
        poses.insert(ObjectId::from("green"), Pose::from_translation(0.1, 0.1, 0.025));
        let state = SceneState::from_observation(&spec, spec.home_pose, Gripper::Open, poses, 0);
        (spec, state)
    }

    fn hold(state: &SceneState, gripper: Gripper) -> Command {
        Command { pose: state.ee_pose, gripper }
    }

    #[test]
    fn commanding_the_current_pose_only_advances_the_counter() {
        let (spec, s0) = cube_scene([0.0, 0.0, 0.02]);
        let s1 = step(&spec, &s0, &hold(&s0, Gripper::Open), &ControllerModel::default()).unwrap();
        assert_eq!(s1.step, 1);
        assert_eq!(SceneState { step: 0, ..s1 }, s0);
    }

    #[test]
    fn perfect_controller_lands_exactly() {
        let (spec, s0) = cube_scene([0.0, 0.0, 0.02]);
        let target = Pose::new([0.3, -0.2, 0.1], Quat::rotz(1.0) * builtin::top_down());
        let cmd = Command { pose: target, gripper: Gripper::Open };
        let s1 = step(&spec, &s0, &cmd, &ControllerModel::perfect(0.05)).unwrap();
        assert_eq!(s1.ee_pose, target);
    }

    #[test]
    fn lag_controller_converges_monotonically() {
        let (spec, s0) = cube_scene([0.0, 0.0, 0.02]);
        let ctl = ControllerModel { max_step_translation: 10.0, max_step_rotation: 10.0, ..Default::default() };
        let target = Pose::new([0.4, 0.3, 0.05], Quat::rotz(0.8) * builtin::top_down());
        let cmd = Command { pose: target, gripper: Gripper::Open };
        let n = math::ceil(10.0 / (ctl.gain * ctl.dt)) as usize;
        let mut s = s0;
        let mut last = pose_error(&s.ee_pose, &target);
        for _ in 0..n {
            s = step(&spec, &s, &cmd, &ctl).unwrap();
            let e = pose_error(&s.ee_pose, &target);
            assert!(e.translational < last.translational && e.angular < last.angular);
            last = e;
        }
        assert!(last.translational < 1e-4, "{last:?}");
    }

    #[test]
    fn per_step_caps_bind() {
        let (spec, s0) = cube_scene([0.0, 0.0, 0.02]);
        let ctl = ControllerModel::default();
        let target = Pose::new([0.9, 0.0, 0.3], s0.ee_pose.orientation());
        let s1 = step(&spec, &s0, &Command { pose: target, gripper: Gripper::Open }, &ctl).unwrap();
        let moved = math::norm(math::sub(s1.ee_pose.position(), s0.ee_pose.position()));
        assert!((moved - ctl.max_step_translation).abs() < 1e-12);
    }

    #[test]
    fn close_attaches_objects_within_grasp_radius() {
        let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
        s.ee_pose = Pose::new([0.004, 0.0, 0.02], builtin::top_down());
        let s1 = step(&spec, &s, &hold(&s, Gripper::Closed), &ControllerModel::default()).unwrap();
        assert_eq!(s1.attached_object(), Some(&ObjectId::from("red")));

        s.ee_pose = Pose::new([0.02, 0.0, 0.02], builtin::top_down());
        let s1 = step(&spec, &s, &hold(&s, Gripper::Closed), &ControllerModel::default()).unwrap();
        assert_eq!(s1.attached_object(), None);
        assert!(s1.gripper.is_closed());
    }

    #[test]
    fn released_object_rests_on_the_object_below_and_follows_it() {
        let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
        s.ee_pose = Pose::new([0.0, 0.0, 0.02], builtin::top_down());
        let ctl = ControllerModel::perfect(0.05);
        s = step(&spec, &s, &hold(&s, Gripper::Closed), &ctl).unwrap();
        // Carry red to just above green, then let go.
        let above = Pose::new([0.105, 0.1, 0.05 + 0.02 + 0.004], builtin::top_down());
        s = step(&spec, &s, &Command { pose: above, gripper: Gripper::Closed }, &ctl).unwrap();
        s = step(&spec, &s, &Command { pose: above, gripper: Gripper::Open }, &ctl).unwrap();
        let red = ObjectId::from("red");
        assert_eq!(s.attached_object(), None);
        assert!((s.object_poses[&red].position()[2] - 0.07).abs() < 1e-12);
        assert_eq!(s.supports[&red].parent, ObjectId::from("green"));

        let green = ObjectId::from("green");
        let schedule = PerturbationSchedule {
            target_object: green.clone(),
            subtask_index: 0,
            fraction: 0.0,
            displacement: Region::point([0.02, 0.0, 0.0]),
            yaw_range: [0.0, 0.0],
            max_events: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (moved, event) = apply_perturbation(&s, &schedule, &mut rng, 0).unwrap();
        assert!(!event.suppressed);
        let dx = moved.object_poses[&red].position()[0] - s.object_poses[&red].position()[0];
        assert!((dx - 0.02).abs() < 1e-12);
    }

    #[test]
    fn release_in_the_air_drops_to_the_table() {
        let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
        s.ee_pose = Pose::new([0.0, 0.0, 0.02], builtin::top_down());
        let ctl = ControllerModel::perfect(0.05);
        s = step(&spec, &s, &hold(&s, Gripper::Closed), &ctl).unwrap();
        let up = Pose::new([-0.1, -0.1, 0.2], builtin::top_down());
        s = step(&spec, &s, &Command { pose: up, gripper: Gripper::Closed }, &ctl).unwrap();
        s = step(&spec, &s, &Command { pose: up, gripper: Gripper::Open }, &ctl).unwrap();
        let p = s.object_poses[&ObjectId::from("red")].position();
        assert_eq!(p, [-0.1, -0.1, 0.02]);
        assert!(s.supports.is_empty());
    }

    #[test]
    fn horizon_is_enforced() {
        let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
        s.step = spec.horizon;
        let r = step(&spec, &s, &hold(&s, Gripper::Open), &ControllerModel::default());
        assert_eq!(r, Err(SceneError::HorizonExceeded { horizon: spec.horizon }));
    }

    #[test]
    fn drawer_slides_along_its_joint_within_limits() {
        let spec = builtin::mug_cleanup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = sample_initial_state(&spec, "D0", &mut rng).unwrap();
        let drawer = ObjectId::from("drawer");
        let d0 = s.object_poses[&drawer];
        let handle = d0.transform_point(spec.object(&drawer).unwrap().grasp_offset);
        s.ee_pose = Pose::new(handle, builtin::top_down());
        let ctl = ControllerModel::perfect(0.05);
        s = step(&spec, &s, &hold(&s, Gripper::Closed), &ctl).unwrap();
        assert_eq!(s.attached_object(), Some(&drawer));
        // Pull diagonally and much further than the travel.
        let pulled = Pose::new(math::add(handle, [-0.5, 0.3, 0.1]), builtin::top_down());
        s = step(&spec, &s, &Command { pose: pulled, gripper: Gripper::Closed }, &ctl).unwrap();
        let d1 = s.object_poses[&drawer];
        let delta = math::sub(d1.position(), d0.position());
        assert!((delta[0] + 0.2).abs() < 1e-12 && delta[1].abs() < 1e-12 && delta[2].abs() < 1e-12);
    }

    #[test]
    fn zero_extent_regions_place_objects_at_their_centers() {
        let mut spec = builtin::stack();
        let v = spec.reset_distributions.get_mut("D0").unwrap();
        v.get_mut("red").unwrap().region = Region::point([0.1, 0.0, 0.02]);
        v.get_mut("red").unwrap().yaw = [0.3, 0.3];
        v.get_mut("green").unwrap().region = Region::point([-0.1, 0.0, 0.025]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_initial_state(&spec, "D0", &mut rng).unwrap();
        assert_eq!(s.object_poses[&ObjectId::from("red")], Pose::new([0.1, 0.0, 0.02], Quat::rotz(0.3)));
        assert_eq!(s.object_poses[&ObjectId::from("green")].position(), [-0.1, 0.0, 0.025]);
        assert_eq!(s.ee_pose, spec.home_pose);
        assert_eq!(s.gripper, Gripper::Open);
    }

    #[test]
    fn forced_collision_is_a_crowded_scene() {
        let mut spec = builtin::stack();
        let v = spec.reset_distributions.get_mut("D0").unwrap();
        v.get_mut("red").unwrap().region = Region::point([0.0, 0.0, 0.02]);
        v.get_mut("green").unwrap().region = Region::point([0.0, 0.0, 0.025]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_initial_state(&spec, "D0", &mut rng),
            Err(SceneError::CrowdedScene { attempts: MAX_PLACEMENT_ATTEMPTS })
        );
    }

    #[test]
    fn unknown_variant_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = sample_initial_state(&builtin::stack(), "D7", &mut rng);
        assert_eq!(r, Err(SceneError::UnknownVariant("D7".into())));
    }

    #[test]
    fn stack_d0_samples_stay_in_the_small_box() {
        let spec = builtin::stack();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let s = sample_initial_state(&spec, "D0", &mut rng).unwrap();
            for pose in s.object_poses.values() {
                let p = pose.position();
                assert!(p[0].abs() <= 0.08 && p[1].abs() <= 0.08, "{p:?}");
            }
        }
    }

    fn schedule(displacement: Region) -> PerturbationSchedule {
        PerturbationSchedule {
            target_object: "red".into(),
            subtask_index: 0,
            fraction: 0.25,
            displacement,
            yaw_range: [0.0, 0.0],
            max_events: 1,
        }
    }

    #[test]
    fn empty_displacement_keeps_the_pose_but_logs_the_event() {
        let (_, s) = cube_scene([0.0, 0.0, 0.02]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s1, event) = apply_perturbation(&s, &schedule(Region::point([0.0; 3])), &mut rng, 0).unwrap();
        assert_eq!(s1.object_poses, s.object_poses);
        assert_eq!(event.delta_position, [0.0; 3]);
        assert!(!event.suppressed);
    }

    #[test]
    fn displacement_samples_are_bounded_and_centered() {
        let (_, s) = cube_scene([0.0, 0.0, 0.02]);
        let sched = schedule(Region::centered([0.0; 3], [0.05, 0.05, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let (_, e) = apply_perturbation(&s, &sched, &mut rng, 0).unwrap();
            for (total, d) in sum.iter_mut().zip(e.delta_position) {
                assert!(d.abs() <= 0.05);
                *total += d;
            }
        }
        let sigma_mean = 0.1 / math::sqrt(12.0) / math::sqrt(n as f64);
        for total in sum {
            assert!((total / n as f64).abs() < 3.0 * sigma_mean);
        }
    }

    #[test]
    fn held_targets_are_not_perturbed() {
        let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
        s.ee_pose = Pose::new([0.0, 0.0, 0.02], builtin::top_down());
        s = step(&spec, &s, &hold(&s, Gripper::Closed), &ControllerModel::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sched = schedule(Region::centered([0.0; 3], [0.05, 0.05, 0.0]));
        let (s1, event) = apply_perturbation(&s, &sched, &mut rng, 0).unwrap();
        assert!(event.suppressed);
        assert_eq!(s1, s);
    }

    #[test]
    fn trigger_step_stays_inside_the_segment() {
        let mut sched = schedule(Region::point([0.0; 3]));
        assert_eq!(sched.trigger_step(40), 10);
        sched.fraction = 1.0;
        assert_eq!(sched.trigger_step(40), 39);
        sched.fraction = 1.5;
        assert!(sched.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn attached_objects_move_rigidly(
            targets in prop::collection::vec(
                (prop::array::uniform3(-0.3f64..0.3), prop::array::uniform3(-1.0f64..1.0)), 1..20),
            gain in 1.0f64..100.0,
        ) {
            let (spec, mut s) = cube_scene([0.0, 0.0, 0.02]);
            s.ee_pose = Pose::new([0.003, -0.002, 0.021], builtin::top_down());
            let ctl = ControllerModel { gain, ..Default::default() };
            s = step(&spec, &s, &hold(&s, Gripper::Closed), &ctl).unwrap();
            let rel0 = s.attached.as_ref().unwrap().relative;
            for (p, r) in targets {
                let pose = Pose::new(p, Quat::from_rotation_vector(r));
                s = step(&spec, &s, &Command { pose, gripper: Gripper::Closed }, &ctl).unwrap();
                let obj = s.object_poses[&ObjectId::from("red")];
                let rel = s.ee_pose.inverse().compose(&obj);
                let e = pose_error(&rel, &rel0);
                prop_assert!(e.translational < 1e-12 && e.angular < 1e-12);
            }
        }

        #[test]
        fn reset_sampling_is_deterministic(seed in any::<u64>()) {
            let spec = builtin::mug_cleanup();
            let a = sample_initial_state(&spec, "D1", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = sample_initial_state(&spec, "D1", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
