//! Kinematic surrogate of a tabletop manipulation scene.
//!
//! There are no forces or contacts. Grasping is proximity attachment, an
//! object released on top of another one rests on it (and follows it),
//! anything else released drops to the table plane `z = 0`. Drawers are
//! modelled as prismatic links of a parent object.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::se3::Pose;

pub mod builtin;
mod predicate;
mod sim;

pub use predicate::{eval_predicate, Predicate, PredicateDef, PredicateLatch};
pub use sim::{
    apply_perturbation, sample_initial_state, step, Attachment, Command, ControllerModel, PerturbationEvent,
    PerturbationSchedule, SceneState, Support,
};

/// Name of an object in a task.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(String::from(s))
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for ObjectId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gripper {
    Open,
    Closed,
}

impl Gripper {
    pub fn is_closed(self) -> bool {
        self == Gripper::Closed
    }
}

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Region {
    pub fn point(p: [f64; 3]) -> Self {
        Region { lo: p, hi: p }
    }

    pub fn centered(center: [f64; 3], half: [f64; 3]) -> Self {
        Region {
            lo: [center[0] - half[0], center[1] - half[1], center[2] - half[2]],
            hi: [center[0] + half[0], center[1] + half[1], center[2] + half[2]],
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    pub fn center(&self) -> [f64; 3] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1]), 0.5 * (self.lo[2] + self.hi[2])]
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.lo[i].is_finite() && self.hi[i].is_finite() && self.hi[i] >= self.lo[i])
    }
}

/// Prismatic link attached to a parent object (e.g. a drawer in a cabinet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrismaticJoint {
    pub parent: ObjectId,
    /// Link origin at `q = 0`, in the parent frame.
    pub offset: [f64; 3],
    /// Unit slide direction in the parent frame.
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub half_extents: [f64; 3],
    /// Point the gripper closes on, in the object frame.
    #[serde(default)]
    pub grasp_offset: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<PrismaticJoint>,
}

impl ObjectSpec {
    pub fn free(id: &str, half_extents: [f64; 3]) -> Self {
        ObjectSpec { id: id.into(), half_extents, grasp_offset: [0.0; 3], joint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub reference_object: ObjectId,
    pub predicate: Predicate,
}

/// Where one object may be placed at reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub region: Region,
    /// `[min, max]` yaw about world z, radians.
    pub yaw: [f64; 2],
}

/// A reset distribution (D0, D1, ...): one placement per free object.
pub type VariantSpec = BTreeMap<ObjectId, Placement>;

/// Complete description of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub objects: Vec<ObjectSpec>,
    pub subtasks: Vec<SubtaskSpec>,
    pub reset_distributions: BTreeMap<String, VariantSpec>,
    /// All of these must hold on the final state for a trial to succeed.
    pub success: Vec<Predicate>,
    pub horizon: usize,
    pub home_pose: Pose,
    pub grasp_radius: f64,
}

impl TaskSpec {
    pub fn object(&self, id: &ObjectId) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.objects.iter().map(|o| &o.id)
    }

    pub fn variant(&self, name: &str) -> Result<&VariantSpec, SceneError> {
        self.reset_distributions.get(name).ok_or_else(|| SceneError::UnknownVariant(String::from(name)))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.subtasks.is_empty() {
            return Err(SceneError::InvalidSpec("subtask list is empty"));
        }
        if self.success.is_empty() {
            return Err(SceneError::InvalidSpec("success predicate list is empty"));
        }
        if !(self.grasp_radius.is_finite() && self.grasp_radius >= 0.0) {
            return Err(SceneError::InvalidSpec("grasp_radius must be non-negative"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|p| p.id == o.id) {
                return Err(SceneError::DuplicateObject(o.id.clone()));
            }
            if o.half_extents.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
                return Err(SceneError::InvalidSpec("half extents must be non-negative"));
            }
            if let Some(j) = &o.joint {
                self.require(&j.parent)?;
                if self.object(&j.parent).and_then(|p| p.joint.as_ref()).is_some() {
                    return Err(SceneError::InvalidSpec("joint parents must be free objects"));
                }
                let n = crate::math::norm(j.axis);
                if (n - 1.0).abs() > 1e-9 || j.lower.is_nan() || j.upper.is_nan() || j.lower > j.upper {
                    return Err(SceneError::InvalidSpec("joint axis must be unit and lower <= upper"));
                }
            }
        }
        for s in &self.subtasks {
            self.require(&s.reference_object)?;
            s.predicate.check_objects(self)?;
        }
        for p in &self.success {
            p.check_objects(self)?;
        }
        for variant in self.reset_distributions.values() {
            for (id, placement) in variant {
                self.require(id)?;
                if !placement.region.is_valid()
                    || placement.yaw.iter().any(|v| v.is_nan())
                    || placement.yaw[1] < placement.yaw[0]
                {
                    return Err(SceneError::InvalidSpec("placement regions need non-negative extents"));
                }
            }
            for o in self.objects.iter().filter(|o| o.joint.is_none()) {
                if !variant.contains_key(&o.id) {
                    return Err(SceneError::MissingPlacement(o.id.clone()));
                }
            }
        }
        Ok(())
    }

    fn require(&self, id: &ObjectId) -> Result<(), SceneError> {
        self.object(id).map(|_| ()).ok_or_else(|| SceneError::UnknownObject(id.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneError {
    UnknownPredicate(String),
    InvalidPredicate(&'static str),
    UnknownObject(ObjectId),
    DuplicateObject(ObjectId),
    UnknownVariant(String),
    MissingPlacement(ObjectId),
    InvalidSpec(&'static str),
    CrowdedScene { attempts: usize },
    HorizonExceeded { horizon: usize },
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::UnknownPredicate(id) => write!(f, "unknown predicate `{id}`"),
            SceneError::InvalidPredicate(why) => write!(f, "invalid predicate: {why}"),
            SceneError::UnknownObject(id) => write!(f, "unknown object `{id}`"),
            SceneError::DuplicateObject(id) => write!(f, "object `{id}` declared twice"),
            SceneError::UnknownVariant(v) => write!(f, "unknown variant `{v}`"),
            SceneError::MissingPlacement(id) => write!(f, "no reset placement for object `{id}`"),
            SceneError::InvalidSpec(why) => write!(f, "invalid task spec: {why}"),
            SceneError::CrowdedScene { attempts } => {
                write!(f, "could not place objects without overlap after {attempts} attempts")
            }
            SceneError::HorizonExceeded { horizon } => write!(f, "step beyond horizon {horizon}"),
        }
    }
}

impl core::error::Error for SceneError {}
