//! Little-endian binary encoding of the core types.

use std::collections::BTreeMap;

use dmgen_core::datagen::{
    FailureReason, GenerationConfig, GenerationRecord, Outcome, SelectionStrategy, Snapshot, SourceDemo, StepLog,
    TrialOutcome,
};
use dmgen_core::scene::{Command, ControllerModel, Gripper, ObjectId, PerturbationEvent, PerturbationSchedule, Region};
use dmgen_core::se3::Pose;
use dmgen_core::segment::{DemoStep, Demonstration, SubtaskSegment};

use crate::error::FormatError;

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn count(&mut self, n: usize) {
        self.u64(n as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.count(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn pose(&mut self, p: &Pose) {
        for v in p.to_array() {
            self.f64(v);
        }
    }

    fn gripper(&mut self, g: Gripper) {
        self.u8(g.is_closed() as u8);
    }

    fn opt_index(&mut self, v: Option<usize>) {
        match v {
            None => self.u8(0),
            Some(i) => {
                self.u8(1);
                self.u64(i as u64);
            }
        }
    }

    fn snapshot(&mut self, s: &Snapshot) {
        self.pose(&s.ee_pose);
        self.gripper(s.gripper);
        self.count(s.object_poses.len());
        for p in &s.object_poses {
            self.pose(p);
        }
        self.opt_index(s.attached);
    }

    pub fn outcome(&mut self, o: &Outcome) {
        match o {
            Outcome::Success => self.u8(0),
            Outcome::Failure(FailureReason::CrowdedScene) => self.u8(1),
            Outcome::Failure(FailureReason::SubtaskIncomplete { subtask, label }) => {
                self.u8(2);
                self.count(*subtask);
                self.str(label);
            }
            Outcome::Failure(FailureReason::OrientationChart { subtask }) => {
                self.u8(3);
                self.count(*subtask);
            }
            Outcome::Failure(FailureReason::SuccessPredicateFalse) => self.u8(4),
            Outcome::Failure(FailureReason::HorizonExceeded) => self.u8(5),
        }
    }

    pub fn trial_outcome(&mut self, t: &TrialOutcome) {
        self.u64(t.seed);
        self.count(t.selected_demo);
        self.outcome(&t.outcome);
    }

    pub fn record(&mut self, r: &GenerationRecord) {
        self.u64(r.seed);
        self.str(&r.variant);
        self.count(r.selected_demo);
        self.count(r.objects.len());
        for id in &r.objects {
            self.str(id.as_str());
        }
        self.snapshot(&r.initial);
        self.count(r.log.len());
        for l in &r.log {
            self.snapshot(&l.state);
            self.pose(&l.command.pose);
            self.gripper(l.command.gripper);
            self.pose(&l.goal);
            self.f64(l.phase);
            self.count(l.subtask);
        }
        self.count(r.perturbations.len());
        for e in &r.perturbations {
            self.count(e.step);
            self.count(e.subtask);
            self.str(e.object.as_str());
            for v in e.delta_position {
                self.f64(v);
            }
            self.f64(e.delta_yaw);
            self.u8(e.suppressed as u8);
        }
        self.count(r.completion_steps.len());
        for c in &r.completion_steps {
            self.opt_index(*c);
        }
        self.outcome(&r.outcome);
    }

    /// Floats are stored raw, so infinite controller gains survive.
    pub fn config(&mut self, c: &GenerationConfig) {
        self.str(&c.variant);
        self.u8(match c.strategy {
            SelectionStrategy::First => 0,
            SelectionStrategy::Orientation => 1,
        });
        match &c.perturbation {
            None => self.u8(0),
            Some(p) => {
                self.u8(1);
                self.str(p.target_object.as_str());
                self.count(p.subtask_index);
                self.f64(p.fraction);
                for v in p.displacement.lo.iter().chain(&p.displacement.hi).chain(&p.yaw_range) {
                    self.f64(*v);
                }
                self.u32(p.max_events);
            }
        }
        let m = &c.controller;
        for v in [m.gain, m.max_step_translation, m.max_step_rotation, m.dt] {
            self.f64(v);
        }
    }

    pub fn source_demo(&mut self, d: &SourceDemo) {
        let demo = &d.demo;
        self.str(&demo.task_id);
        self.f64(demo.dt);
        self.count(demo.steps.len());
        for s in &demo.steps {
            self.f64(s.t);
            self.pose(&s.ee_pose);
            self.gripper(s.gripper);
            self.count(s.object_poses.len());
            for (id, p) in &s.object_poses {
                self.str(id.as_str());
                self.pose(p);
            }
        }
        self.count(d.segments.len());
        for seg in &d.segments {
            self.count(seg.subtask_index);
            self.str(seg.reference_object.as_str());
            self.count(seg.step_range.start);
            self.count(seg.step_range.end);
            self.count(seg.gripper_track.len());
            for g in &seg.gripper_track {
                self.gripper(*g);
            }
        }
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn malformed(what: &str) -> FormatError {
    FormatError::Malformed(what.to_string())
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(FormatError::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// A count or index; bounded by the remaining bytes to reject garbage early.
    pub fn count(&mut self) -> Result<usize, FormatError> {
        let v = self.u64()?;
        usize::try_from(v).ok().filter(|n| *n <= self.bytes.len() * 8).ok_or_else(|| malformed("count out of range"))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.count()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }

    pub fn pose(&mut self) -> Result<Pose, FormatError> {
        let mut a = [0.0; 7];
        for v in &mut a {
            *v = self.f64()?;
        }
        Pose::try_from(a).map_err(|e| malformed(&format!("pose: {e}")))
    }

    fn gripper(&mut self) -> Result<Gripper, FormatError> {
        match self.u8()? {
            0 => Ok(Gripper::Open),
            1 => Ok(Gripper::Closed),
            _ => Err(malformed("gripper flag")),
        }
    }

    fn flag(&mut self) -> Result<bool, FormatError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(malformed("boolean flag")),
        }
    }

    fn opt_index(&mut self) -> Result<Option<usize>, FormatError> {
        Ok(if self.flag()? { Some(self.count()?) } else { None })
    }

    fn snapshot(&mut self) -> Result<Snapshot, FormatError> {
        let ee_pose = self.pose()?;
        let gripper = self.gripper()?;
        let n = self.count()?;
        let object_poses = (0..n).map(|_| self.pose()).collect::<Result<_, _>>()?;
        let attached = self.opt_index()?;
        Ok(Snapshot { ee_pose, gripper, object_poses, attached })
    }

    pub fn outcome(&mut self) -> Result<Outcome, FormatError> {
        let reason = match self.u8()? {
            0 => return Ok(Outcome::Success),
            1 => FailureReason::CrowdedScene,
            2 => FailureReason::SubtaskIncomplete { subtask: self.count()?, label: self.str()? },
            3 => FailureReason::OrientationChart { subtask: self.count()? },
            4 => FailureReason::SuccessPredicateFalse,
            5 => FailureReason::HorizonExceeded,
            _ => return Err(malformed("outcome tag")),
        };
        Ok(Outcome::Failure(reason))
    }

    pub fn trial_outcome(&mut self) -> Result<TrialOutcome, FormatError> {
        Ok(TrialOutcome { seed: self.u64()?, selected_demo: self.count()?, outcome: self.outcome()? })
    }

    pub fn record(&mut self) -> Result<GenerationRecord, FormatError> {
        let seed = self.u64()?;
        let variant = self.str()?;
        let selected_demo = self.count()?;
        let n = self.count()?;
        let objects = (0..n).map(|_| self.str().map(ObjectId)).collect::<Result<Vec<_>, _>>()?;
        let initial = self.snapshot()?;
        let n = self.count()?;
        let mut log = Vec::with_capacity(n);
        for _ in 0..n {
            let state = self.snapshot()?;
            let command = Command { pose: self.pose()?, gripper: self.gripper()? };
            log.push(StepLog { state, command, goal: self.pose()?, phase: self.f64()?, subtask: self.count()? });
        }
        let n = self.count()?;
        let mut perturbations = Vec::with_capacity(n);
        for _ in 0..n {
            perturbations.push(PerturbationEvent {
                step: self.count()?,
                subtask: self.count()?,
                object: ObjectId(self.str()?),
                delta_position: [self.f64()?, self.f64()?, self.f64()?],
                delta_yaw: self.f64()?,
                suppressed: self.flag()?,
            });
        }
        let n = self.count()?;
        let completion_steps = (0..n).map(|_| self.opt_index()).collect::<Result<_, _>>()?;
        let outcome = self.outcome()?;
        Ok(GenerationRecord {
            seed,
            variant,
            selected_demo,
            objects,
            initial,
            log,
            perturbations,
            completion_steps,
            outcome,
        })
    }

    pub fn config(&mut self) -> Result<GenerationConfig, FormatError> {
        let variant = self.str()?;
        let strategy = match self.u8()? {
            0 => SelectionStrategy::First,
            1 => SelectionStrategy::Orientation,
            _ => return Err(malformed("selection strategy")),
        };
        let perturbation = if self.flag()? {
            let target_object = ObjectId(self.str()?);
            let subtask_index = self.count()?;
            let fraction = self.f64()?;
            let mut v = [0.0; 8];
            for x in &mut v {
                *x = self.f64()?;
            }
            Some(PerturbationSchedule {
                target_object,
                subtask_index,
                fraction,
                displacement: Region { lo: [v[0], v[1], v[2]], hi: [v[3], v[4], v[5]] },
                yaw_range: [v[6], v[7]],
                max_events: self.u32()?,
            })
        } else {
            None
        };
        let controller = ControllerModel {
            gain: self.f64()?,
            max_step_translation: self.f64()?,
            max_step_rotation: self.f64()?,
            dt: self.f64()?,
        };
        Ok(GenerationConfig { variant, strategy, perturbation, controller })
    }

    pub fn source_demo(&mut self) -> Result<SourceDemo, FormatError> {
        let task_id = self.str()?;
        let dt = self.f64()?;
        let n = self.count()?;
        let mut steps = Vec::with_capacity(n);
        for _ in 0..n {
            let t = self.f64()?;
            let ee_pose = self.pose()?;
            let gripper = self.gripper()?;
            let m = self.count()?;
            let mut object_poses = BTreeMap::new();
            for _ in 0..m {
                let id = ObjectId(self.str()?);
                object_poses.insert(id, self.pose()?);
            }
            steps.push(DemoStep { t, ee_pose, gripper, object_poses });
        }
        let n = self.count()?;
        let mut segments = Vec::with_capacity(n);
        for _ in 0..n {
            let subtask_index = self.count()?;
            let reference_object = ObjectId(self.str()?);
            let start = self.count()?;
            let end = self.count()?;
            let m = self.count()?;
            let gripper_track = (0..m).map(|_| self.gripper()).collect::<Result<_, _>>()?;
            segments.push(SubtaskSegment { subtask_index, reference_object, step_range: start..end, gripper_track });
        }
        Ok(SourceDemo { demo: Demonstration { task_id, dt, steps }, segments })
    }
}
