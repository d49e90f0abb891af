//! Task specs that ship with the crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use core::f64::consts::PI;

use super::{ObjectId, ObjectSpec, Placement, Predicate, PrismaticJoint, Region, SubtaskSpec, TaskSpec, VariantSpec};
use crate::se3::{Pose, Quat};

pub const NAMES: [&str; 3] = ["stack", "square-surrogate", "mugcleanup-surrogate"];

/// Looks up a built-in spec by name.
pub fn by_name(name: &str) -> Option<TaskSpec> {
    match name {
        "stack" => Some(stack()),
        "square-surrogate" => Some(square()),
        "mugcleanup-surrogate" => Some(mug_cleanup()),
        _ => None,
    }
}

/// Gripper pointing straight down, fingers along world y.
pub fn top_down() -> Quat {
    Quat::rotx(PI)
}

fn home() -> Pose {
    Pose::new([-0.1, 0.0, 0.3], top_down())
}

fn subtask(reference: &str, predicate: Predicate) -> SubtaskSpec {
    SubtaskSpec { reference_object: reference.into(), predicate }
}

/// Box of size `sx` by `sy` centered at `(cx, cy)`, resting at height `z`.
fn table_box(cx: f64, cy: f64, sx: f64, sy: f64, z: f64) -> Region {
    Region::centered([cx, cy, z], [sx / 2.0, sy / 2.0, 0.0])
}

fn placed(region: Region, yaw: [f64; 2]) -> Placement {
    Placement { region, yaw }
}

fn variant(entries: &[(&str, Placement)]) -> VariantSpec {
    entries.iter().map(|(id, p)| (ObjectId::from(*id), *p)).collect()
}

/// Red cube on green cube. Cubes have 90 degree symmetry, so a yaw in
/// `[-pi/4, pi/4]` covers every distinct top-down rotation.
pub fn stack() -> TaskSpec {
    let (hr, hg) = (0.02, 0.025);
    let yaw = [-PI / 4.0, PI / 4.0];
    let mut resets = BTreeMap::new();
    resets.insert(
        String::from("D0"),
        variant(&[
            ("red", placed(table_box(0.0, 0.0, 0.16, 0.16, hr), yaw)),
            ("green", placed(table_box(0.0, 0.0, 0.16, 0.16, hg), yaw)),
        ]),
    );
    resets.insert(
        String::from("D1"),
        variant(&[
            ("red", placed(table_box(0.0, 0.0, 0.4, 0.4, hr), yaw)),
            ("green", placed(table_box(0.0, 0.0, 0.4, 0.4, hg), yaw)),
        ]),
    );
    let place = Predicate::placed_on("red", "green", 0.02, 0.01);
    TaskSpec {
        name: String::from("stack"),
        objects: vec![ObjectSpec::free("red", [hr; 3]), ObjectSpec::free("green", [hg; 3])],
        subtasks: vec![subtask("red", Predicate::grasped("red")), subtask("green", place.clone())],
        reset_distributions: resets,
        success: vec![place],
        horizon: 400,
        home_pose: home(),
        grasp_radius: 0.01,
    }
}

/// Nut with an off-center handle placed over a thin peg, tight xy tolerance.
pub fn square() -> TaskSpec {
    let nut_h = [0.03, 0.03, 0.01];
    let peg_h = [0.01, 0.01, 0.05];
    let full = [-PI, PI];
    let mut resets = BTreeMap::new();
    resets.insert(
        String::from("D0"),
        variant(&[
            ("nut", placed(table_box(-0.05, -0.1, 0.005, 0.115, nut_h[2]), full)),
            ("peg", placed(Region::point([0.1, 0.1, peg_h[2]]), [0.0, 0.0])),
        ]),
    );
    resets.insert(
        String::from("D1"),
        variant(&[
            ("nut", placed(table_box(-0.05, -0.1, 0.23, 0.51, nut_h[2]), full)),
            ("peg", placed(table_box(0.1, 0.1, 0.4, 0.4, peg_h[2]), [0.0, 0.0])),
        ]),
    );
    resets.insert(
        String::from("D2"),
        variant(&[
            ("nut", placed(table_box(0.0, 0.0, 0.5, 0.5, nut_h[2]), full)),
            ("peg", placed(table_box(0.0, 0.0, 0.5, 0.5, peg_h[2]), full)),
        ]),
    );
    let place = Predicate::placed_on("nut", "peg", 0.005, 0.01);
    let nut = ObjectSpec { grasp_offset: [0.05, 0.0, 0.0], ..ObjectSpec::free("nut", nut_h) };
    TaskSpec {
        name: String::from("square-surrogate"),
        objects: vec![nut, ObjectSpec::free("peg", peg_h)],
        subtasks: vec![subtask("nut", Predicate::grasped("nut")), subtask("peg", place.clone())],
        reset_distributions: resets,
        success: vec![place],
        horizon: 400,
        home_pose: home(),
        grasp_radius: 0.01,
    }
}

/// Cabinet with a sliding drawer and a mug: open, grasp, place inside, close.
pub fn mug_cleanup() -> TaskSpec {
    let cab_h = [0.12, 0.15, 0.08];
    let drawer_h = [0.1, 0.12, 0.03];
    let mug_h = [0.04, 0.04, 0.05];
    let travel = 0.2;
    let cabinet_at = [0.25, 0.0, cab_h[2]];
    // Drawer origin in the cabinet frame, sliding out along -x.
    let offset = [-0.02, 0.0, 0.02];
    let drawer = ObjectSpec {
        id: "drawer".into(),
        half_extents: drawer_h,
        grasp_offset: [-drawer_h[0] - 0.01, 0.0, 0.0],
        joint: Some(PrismaticJoint {
            parent: "cabinet".into(),
            offset,
            axis: [-1.0, 0.0, 0.0],
            lower: 0.0,
            upper: travel,
        }),
    };
    // Drawer-center regions in the cabinet frame.
    let (x0, z) = (offset[0], offset[2]);
    let open = Region { lo: [x0 - travel - 0.02, -0.05, z - 0.05], hi: [x0 - travel + 0.03, 0.05, z + 0.05] };
    let closed = Region { lo: [x0 - 0.02, -0.05, z - 0.05], hi: [x0 + 0.02, 0.05, z + 0.05] };

    let full = [-PI, PI];
    let mut resets = BTreeMap::new();
    resets.insert(
        String::from("D0"),
        variant(&[
            ("cabinet", placed(Region::point(cabinet_at), [0.0, 0.0])),
            ("mug", placed(table_box(0.0, -0.3, 0.3, 0.15, mug_h[2]), full)),
        ]),
    );
    resets.insert(
        String::from("D1"),
        variant(&[
            ("cabinet", placed(table_box(cabinet_at[0], 0.0, 0.2, 0.1, cab_h[2]), [-PI / 6.0, PI / 6.0])),
            ("mug", placed(table_box(0.0, -0.3, 0.4, 0.15, mug_h[2]), full)),
        ]),
    );
    let in_drawer = Predicate::placed_on("mug", "drawer", 0.05, 0.01);
    let is_closed = Predicate::in_region_of("drawer", "cabinet", closed);
    TaskSpec {
        name: String::from("mugcleanup-surrogate"),
        objects: vec![
            ObjectSpec::free("cabinet", cab_h),
            drawer,
            ObjectSpec { grasp_offset: [0.0, 0.0, mug_h[2] - 0.01], ..ObjectSpec::free("mug", mug_h) },
        ],
        subtasks: vec![
            subtask("cabinet", Predicate::in_region_of("drawer", "cabinet", open)),
            subtask("mug", Predicate::grasped("mug")),
            subtask("drawer", in_drawer.clone()),
            subtask("cabinet", is_closed.clone()),
        ],
        reset_distributions: resets,
        success: vec![in_drawer, is_closed],
        horizon: 900,
        home_pose: home(),
        grasp_radius: 0.01,
    }
}
