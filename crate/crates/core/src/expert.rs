//! Scripted expert that stands in for a human demonstrator.
//!
//! Each subtask is turned into a few waypoints (approach from above,
//! descend, dwell, actuate the gripper) joined by minimum-jerk moves and
//! executed in the surrogate scene with a perfect controller.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::scene::{
    builtin, sample_initial_state, step, Command, ControllerModel, Gripper, ObjectId, Predicate, PredicateLatch,
    SceneError, SceneState, TaskSpec,
};
use crate::se3::{Pose, Quat};
use crate::segment::{DemoStep, Demonstration};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertConfig {
    pub dt: f64,
    /// Cruise speed of the min-jerk moves, m/s.
    pub speed: f64,
    pub angular_speed: f64,
    /// Height of the pre-grasp and pre-place waypoints above the target.
    pub approach_height: f64,
    pub min_move_steps: usize,
    /// Steps spent still at a target before actuating the gripper.
    pub dwell_steps: usize,
    /// Steps held after the last subtask completes.
    pub settle_steps: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            dt: 0.05,
            speed: 0.1,
            angular_speed: 0.8,
            approach_height: 0.1,
            min_move_steps: 8,
            dwell_steps: 6,
            settle_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertError {
    Scene(SceneError),
    /// The subtask needs the object in hand and it is not.
    NotHolding {
        subtask: usize,
        object: ObjectId,
    },
    /// The scripted motion ran but the completion predicate did not fire.
    SubtaskFailed(usize),
    Unsupported(&'static str),
}

impl fmt::Display for ExpertError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpertError::Scene(e) => write!(f, "{e}"),
            ExpertError::NotHolding { subtask, object } => {
                write!(f, "subtask {subtask} needs `{object}` in the gripper")
            }
            ExpertError::SubtaskFailed(i) => write!(f, "scripted motion did not complete subtask {i}"),
            ExpertError::Unsupported(why) => write!(f, "unsupported by the scripted expert: {why}"),
        }
    }
}

impl core::error::Error for ExpertError {}

impl From<SceneError> for ExpertError {
    fn from(e: SceneError) -> Self {
        ExpertError::Scene(e)
    }
}

fn min_jerk(s: f64) -> f64 {
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Records the scene while the script drives it.
struct Recorder<'a> {
    spec: &'a TaskSpec,
    cfg: &'a ExpertConfig,
    controller: ControllerModel,
    state: SceneState,
    latch: PredicateLatch,
    steps: Vec<DemoStep>,
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a TaskSpec, cfg: &'a ExpertConfig, initial: SceneState) -> Self {
        let mut r = Recorder {
            spec,
            cfg,
            controller: ControllerModel::perfect(cfg.dt),
            latch: PredicateLatch::new(spec.subtasks.len()),
            steps: Vec::new(),
            state: initial,
        };
        r.record();
        r
    }

    fn record(&mut self) {
        let s = &self.state;
        self.steps.push(DemoStep {
            t: self.steps.len() as f64 * self.cfg.dt,
            ee_pose: s.ee_pose,
            gripper: s.gripper,
            object_poses: s.object_poses.clone(),
        });
    }

    fn command(&mut self, pose: Pose, gripper: Gripper) -> Result<(), ExpertError> {
        self.state = step(self.spec, &self.state, &Command { pose, gripper }, &self.controller)?;
        let k = self.state.step;
        self.latch.update(self.spec, &self.state, k)?;
        self.record();
        Ok(())
    }

    fn move_to(&mut self, target: Pose) -> Result<(), ExpertError> {
        let start = self.state.ee_pose;
        let dist = math::norm(math::sub(target.position(), start.position()));
        let rot = (start.orientation().conjugate() * target.orientation()).to_rotation_vector();
        let secs = (dist / self.cfg.speed).max(math::norm(rot) / self.cfg.angular_speed);
        let n = (math::ceil(secs / self.cfg.dt) as usize).max(self.cfg.min_move_steps);
        let gripper = self.state.gripper;
        for k in 1..=n {
            let s = min_jerk(k as f64 / n as f64);
            let pose = if k == n {
                target
            } else {
                let p = math::add(start.position(), math::scale(math::sub(target.position(), start.position()), s));
                Pose::new(p, start.orientation() * Quat::from_rotation_vector(math::scale(rot, s)))
            };
            self.command(pose, gripper)?;
        }
        Ok(())
    }

    fn dwell(&mut self, n: usize) -> Result<(), ExpertError> {
        let (pose, gripper) = (self.state.ee_pose, self.state.gripper);
        for _ in 0..n {
            self.command(pose, gripper)?;
        }
        Ok(())
    }

    fn actuate(&mut self, gripper: Gripper) -> Result<(), ExpertError> {
        self.command(self.state.ee_pose, gripper)
    }

    fn above(&self, pose: &Pose) -> Pose {
        let p = pose.position();
        pose.with_position([p[0], p[1], p[2] + self.cfg.approach_height])
    }

    fn pose_of(&self, id: &ObjectId) -> Result<Pose, ExpertError> {
        self.state.object_pose(id).copied().ok_or_else(|| SceneError::UnknownObject(id.clone()).into())
    }

    /// Top-down grasp of `id`'s grasp point. The parallel-jaw gripper is
    /// symmetric under a half turn, so the yaw closest to the current one is used.
    fn grasp(&mut self, id: &ObjectId) -> Result<(), ExpertError> {
        let obj = self.spec.object(id).ok_or_else(|| SceneError::UnknownObject(id.clone()))?;
        let pose = self.pose_of(id)?;
        let point = pose.transform_point(obj.grasp_offset);
        let current = self.state.ee_pose.orientation().yaw();
        let mut yaw = pose.orientation().yaw();
        if math::wrap_angle(yaw - current).abs() > PI / 2.0 {
            yaw = math::wrap_angle(yaw + PI);
        }
        let target = Pose::new(point, Quat::rotz(yaw) * builtin::top_down());
        self.move_to(self.above(&target))?;
        self.move_to(target)?;
        self.dwell(self.cfg.dwell_steps)?;
        self.actuate(Gripper::Closed)
    }

    /// Carries the held object to `object_goal` and lets go.
    fn place(&mut self, subtask: usize, id: &ObjectId, object_goal: [f64; 3]) -> Result<(), ExpertError> {
        let rel = match &self.state.attached {
            Some(a) if &a.object == id => a.relative,
            _ => return Err(ExpertError::NotHolding { subtask, object: id.clone() }),
        };
        let goal = Pose::new(object_goal, self.pose_of(id)?.orientation()).compose(&rel.inverse());
        let lift = self.above(&self.state.ee_pose);
        self.move_to(lift)?;
        self.move_to(self.above(&goal))?;
        self.move_to(goal)?;
        self.dwell(self.cfg.dwell_steps)?;
        self.actuate(Gripper::Open)
    }

    fn run_subtask(&mut self, i: usize) -> Result<(), ExpertError> {
        let spec = self.spec;
        match &spec.subtasks[i].predicate {
            Predicate::Grasped { object } => self.grasp(object),
            Predicate::PlacedOn { object, base, .. } => {
                let b = self.pose_of(base)?.position();
                let hb = spec.object(base).map_or(0.0, |o| o.half_extents[2]);
                let ho = spec.object(object).map_or(0.0, |o| o.half_extents[2]);
                self.place(i, object, [b[0], b[1], b[2] + hb + ho])
            }
            Predicate::InRegion { object, region, frame } => {
                let frame_pose = match frame {
                    Some(f) => self.pose_of(f)?,
                    None => Pose::IDENTITY,
                };
                let center = frame_pose.transform_point(region.center());
                let obj = spec.object(object).ok_or_else(|| SceneError::UnknownObject(object.clone()))?;
                match &obj.joint {
                    Some(joint) => {
                        if self.state.attached_object() != Some(object) {
                            self.grasp(object)?;
                        }
                        let parent = self.pose_of(&joint.parent)?;
                        let axis = parent.orientation().rotate(joint.axis);
                        let origin = parent.transform_point(joint.offset);
                        let now = self.pose_of(object)?.position();
                        let q_now = math::dot(math::sub(now, origin), axis);
                        let q_goal = math::dot(math::sub(center, origin), axis).clamp(joint.lower, joint.upper);
                        let ee = self.state.ee_pose;
                        let moved = math::add(ee.position(), math::scale(axis, q_goal - q_now));
                        self.move_to(ee.with_position(moved))?;
                        self.dwell(self.cfg.dwell_steps)?;
                        self.actuate(Gripper::Open)
                    }
                    None => self.place(i, object, [center[0], center[1], obj.half_extents[2]]),
                }
            }
            Predicate::Lifted { object, height } => {
                if self.state.attached_object() != Some(object) {
                    return Err(ExpertError::NotHolding { subtask: i, object: object.clone() });
                }
                let hz = spec.object(object).map_or(0.0, |o| o.half_extents[2]);
                let z = self.pose_of(object)?.position()[2] - hz;
                let ee = self.state.ee_pose;
                let mut p = ee.position();
                p[2] += (height - z).max(0.0) + 0.02;
                self.move_to(ee.with_position(p))?;
                self.dwell(self.cfg.dwell_steps)
            }
        }
    }
}

/// Runs the scripted expert from `initial` and returns the recorded demo.
pub fn scripted_demo(spec: &TaskSpec, initial: SceneState, cfg: &ExpertConfig) -> Result<Demonstration, ExpertError> {
    let mut rec = Recorder::new(spec, cfg, initial);
    for i in 0..spec.subtasks.len() {
        rec.run_subtask(i)?;
        if !rec.latch.is_complete(i) {
            return Err(ExpertError::SubtaskFailed(i));
        }
    }
    rec.dwell(cfg.settle_steps)?;
    Ok(Demonstration { task_id: spec.name.clone(), dt: cfg.dt, steps: rec.steps })
}

/// The object whose yaw distinguishes demos: the reference object of the
/// first subtask that refers to a free object nothing is jointed to.
pub fn varied_object(spec: &TaskSpec) -> &ObjectId {
    let is_plain = |id: &ObjectId| {
        spec.object(id).is_some_and(|o| o.joint.is_none())
            && !spec.objects.iter().any(|o| o.joint.as_ref().is_some_and(|j| &j.parent == id))
    };
    spec.subtasks
        .iter()
        .map(|s| &s.reference_object)
        .find(|id| is_plain(id))
        .unwrap_or(&spec.subtasks[0].reference_object)
}

/// `n` demos from one seeded reset; demo `j` has the varied object turned
/// by an extra `j * pi / 2` about its vertical axis.
pub fn synthesize_demos(
    spec: &TaskSpec,
    variant: &str,
    seed: u64,
    n: usize,
    cfg: &ExpertConfig,
) -> Result<Vec<Demonstration>, ExpertError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = sample_initial_state(spec, variant, &mut rng)?;
    let id = varied_object(spec).clone();
    (0..n)
        .map(|j| {
            let mut s = initial.clone();
            if j > 0 {
                let pose = s.object_poses[&id];
                let turned = Quat::rotz(j as f64 * PI / 2.0) * pose.orientation();
                s.object_poses.insert(id.clone(), pose.with_orientation(turned));
            }
            scripted_demo(spec, s, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::eval_predicate;
    use crate::segment::segment_demo;

    #[test]
    fn min_jerk_profile_endpoints() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn every_builtin_demo_segments_cleanly() {
        for name in builtin::NAMES {
            let spec = builtin::by_name(name).unwrap();
            for seed in 0..5 {
                let demos = synthesize_demos(&spec, "D0", seed, 1, &ExpertConfig::default()).unwrap();
                let demo = &demos[0];
                assert!(demo.len() <= spec.horizon, "{name}: {} steps", demo.len());
                let segs = segment_demo(demo, &spec).unwrap();
                assert_eq!(segs.len(), spec.subtasks.len());
                let last = demo.scene_state(&spec, demo.len() - 1);
                for p in &spec.success {
                    assert!(eval_predicate(p, &spec, &last).unwrap(), "{name} seed {seed}: {p}");
                }
            }
        }
    }

    #[test]
    fn two_demos_differ_by_a_quarter_turn() {
        let spec = builtin::square();
        let demos = synthesize_demos(&spec, "D0", 11, 2, &ExpertConfig::default()).unwrap();
        let nut = ObjectId::from("nut");
        let yaw = |d: &Demonstration| d.steps[0].object_poses[&nut].orientation().yaw();
        let diff = math::wrap_angle(yaw(&demos[1]) - yaw(&demos[0]));
        assert!((diff - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = builtin::stack();
        let a = synthesize_demos(&spec, "D0", 7, 1, &ExpertConfig::default()).unwrap();
        let b = synthesize_demos(&spec, "D0", 7, 1, &ExpertConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
