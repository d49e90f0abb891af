use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ObjectId, Region, SceneError, SceneState, TaskSpec};
use crate::math;

/// Geometric completion / success test.
///
/// `placed_on` and `in_region` only hold for objects the gripper has let go
/// of, so they fire on release rather than while the object is carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredicateDef", into = "PredicateDef")]
pub enum Predicate {
    Grasped {
        object: ObjectId,
    },
    PlacedOn {
        object: ObjectId,
        base: ObjectId,
        xy_tol: f64,
        z_tol: f64,
    },
    /// `region` is expressed in the frame of `frame` when given, else in the world.
    InRegion {
        object: ObjectId,
        region: Region,
        frame: Option<ObjectId>,
    },
    /// Bottom face at least `height` above the table.
    Lifted {
        object: ObjectId,
        height: f64,
    },
}

/// Config-file form of a predicate: `{ id, objects, params }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub id: String,
    pub objects: Vec<ObjectId>,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl Predicate {
    pub fn grasped(object: &str) -> Self {
        Predicate::Grasped { object: object.into() }
    }

    pub fn placed_on(object: &str, base: &str, xy_tol: f64, z_tol: f64) -> Self {
        Predicate::PlacedOn { object: object.into(), base: base.into(), xy_tol, z_tol }
    }

    pub fn in_region(object: &str, region: Region) -> Self {
        Predicate::InRegion { object: object.into(), region, frame: None }
    }

    /// Region given in the frame of object `frame`.
    pub fn in_region_of(object: &str, frame: &str, region: Region) -> Self {
        Predicate::InRegion { object: object.into(), region, frame: Some(frame.into()) }
    }

    pub fn lifted(object: &str, height: f64) -> Self {
        Predicate::Lifted { object: object.into(), height }
    }

    /// Builds a predicate from its identifier, object arguments and numeric parameters.
    pub fn parse(id: &str, objects: &[ObjectId], params: &[f64]) -> Result<Self, SceneError> {
        let arity = |n_obj: usize, n_par: usize| {
            if objects.len() != n_obj || params.len() != n_par {
                Err(SceneError::InvalidPredicate("wrong number of objects or parameters"))
            } else if params.iter().any(|p| !p.is_finite()) {
                Err(SceneError::InvalidPredicate("parameters must be finite"))
            } else {
                Ok(())
            }
        };
        match id {
            "grasped" => {
                arity(1, 0)?;
                Ok(Predicate::Grasped { object: objects[0].clone() })
            }
            "placed_on" => {
                arity(2, 2)?;
                if params[0] < 0.0 || params[1] < 0.0 {
                    return Err(SceneError::InvalidPredicate("tolerances must be non-negative"));
                }
                Ok(Predicate::PlacedOn {
                    object: objects[0].clone(),
                    base: objects[1].clone(),
                    xy_tol: params[0],
                    z_tol: params[1],
                })
            }
            "in_region" => {
                if objects.len() == 2 {
                    arity(2, 6)?;
                } else {
                    arity(1, 6)?;
                }
                let region = Region { lo: [params[0], params[1], params[2]], hi: [params[3], params[4], params[5]] };
                if !region.is_valid() {
                    return Err(SceneError::InvalidPredicate("region has negative extent"));
                }
                Ok(Predicate::InRegion { object: objects[0].clone(), region, frame: objects.get(1).cloned() })
            }
            "lifted" => {
                arity(1, 1)?;
                Ok(Predicate::Lifted { object: objects[0].clone(), height: params[0] })
            }
            other => Err(SceneError::UnknownPredicate(String::from(other))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Predicate::Grasped { .. } => "grasped",
            Predicate::PlacedOn { .. } => "placed_on",
            Predicate::InRegion { .. } => "in_region",
            Predicate::Lifted { .. } => "lifted",
        }
    }

    /// The object whose state the predicate is about.
    pub fn object(&self) -> &ObjectId {
        match self {
            Predicate::Grasped { object }
            | Predicate::PlacedOn { object, .. }
            | Predicate::InRegion { object, .. }
            | Predicate::Lifted { object, .. } => object,
        }
    }

    /// Short label for a trial that failed on this predicate.
    pub fn miss_label(&self) -> &'static str {
        match self {
            Predicate::Grasped { .. } => "grasp-missed",
            Predicate::PlacedOn { .. } => "place-missed",
            Predicate::InRegion { .. } => "region-missed",
            Predicate::Lifted { .. } => "lift-missed",
        }
    }

    pub(crate) fn check_objects(&self, spec: &TaskSpec) -> Result<(), SceneError> {
        let mut ids = vec![self.object()];
        match self {
            Predicate::PlacedOn { base, .. } => ids.push(base),
            Predicate::InRegion { frame: Some(f), .. } => ids.push(f),
            _ => {}
        }
        for id in ids {
            spec.object(id).ok_or_else(|| SceneError::UnknownObject(id.clone()))?;
        }
        Ok(())
    }
}

impl TryFrom<PredicateDef> for Predicate {
    type Error = SceneError;

    fn try_from(d: PredicateDef) -> Result<Self, Self::Error> {
        Predicate::parse(&d.id, &d.objects, &d.params)
    }
}

impl From<Predicate> for PredicateDef {
    fn from(p: Predicate) -> Self {
        let id = String::from(p.id());
        match p {
            Predicate::Grasped { object } => PredicateDef { id, objects: vec![object], params: vec![] },
            Predicate::PlacedOn { object, base, xy_tol, z_tol } => {
                PredicateDef { id, objects: vec![object, base], params: vec![xy_tol, z_tol] }
            }
            Predicate::InRegion { object, region, frame } => {
                let (lo, hi) = (region.lo, region.hi);
                let mut objects = vec![object];
                objects.extend(frame);
                PredicateDef { id, objects, params: vec![lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]] }
            }
            Predicate::Lifted { object, height } => PredicateDef { id, objects: vec![object], params: vec![height] },
        }
    }
}

impl core::fmt::Display for Predicate {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Predicate::PlacedOn { object, base, .. } => write!(f, "placed_on({object}, {base})"),
            p => write!(f, "{}({})", p.id(), p.object()),
        }
    }
}

/// Pure geometric evaluation of `pred` on `state`.
pub fn eval_predicate(pred: &Predicate, spec: &TaskSpec, state: &SceneState) -> Result<bool, SceneError> {
    let pose_of = |id: &ObjectId| state.object_pose(id).ok_or_else(|| SceneError::UnknownObject(id.clone()));
    let half_z =
        |id: &ObjectId| spec.object(id).map(|o| o.half_extents[2]).ok_or_else(|| SceneError::UnknownObject(id.clone()));
    match pred {
        Predicate::Grasped { object } => {
            pose_of(object)?;
            Ok(state.attached_object() == Some(object))
        }
        Predicate::PlacedOn { object, base, xy_tol, z_tol } => {
            let p = pose_of(object)?.position();
            let b = pose_of(base)?.position();
            if state.attached_object() == Some(object) {
                return Ok(false);
            }
            let xy = math::sqrt((p[0] - b[0]) * (p[0] - b[0]) + (p[1] - b[1]) * (p[1] - b[1]));
            let stack_z = b[2] + half_z(base)? + half_z(object)?;
            Ok(xy <= *xy_tol && (p[2] - stack_z).abs() <= *z_tol)
        }
        Predicate::InRegion { object, region, frame } => {
            let mut p = pose_of(object)?.position();
            if let Some(f) = frame {
                p = pose_of(f)?.inverse().transform_point(p);
            }
            Ok(state.attached_object() != Some(object) && region.contains(p))
        }
        Predicate::Lifted { object, height } => {
            let p = pose_of(object)?.position();
            Ok(p[2] - half_z(object)? >= *height)
        }
    }
}

/// Latched, sequentially armed completion tracking over a task's subtasks.
///
/// Subtask `i` is only evaluated once subtask `i - 1` has completed, and a
/// completed subtask stays completed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredicateLatch {
    completed: Vec<Option<usize>>,
}

impl PredicateLatch {
    pub fn new(n_subtasks: usize) -> Self {
        PredicateLatch { completed: vec![None; n_subtasks] }
    }

    /// Index of the first subtask that has not completed yet.
    pub fn armed(&self) -> Option<usize> {
        self.completed.iter().position(Option::is_none)
    }

    /// Evaluates the armed subtask on `state`; returns its index if it fired.
    pub fn update(&mut self, spec: &TaskSpec, state: &SceneState, step: usize) -> Result<Option<usize>, SceneError> {
        let Some(i) = self.armed() else { return Ok(None) };
        if eval_predicate(&spec.subtasks[i].predicate, spec, state)? {
            self.completed[i] = Some(step);
            Ok(Some(i))
        } else {
            Ok(None)
        }
    }

    pub fn is_complete(&self, i: usize) -> bool {
        self.completed.get(i).is_some_and(Option::is_some)
    }

    pub fn all_complete(&self) -> bool {
        self.completed.iter().all(Option::is_some)
    }

    pub fn completion_steps(&self) -> &[Option<usize>] {
        &self.completed
    }
}
