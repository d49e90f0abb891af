//! Per-step CSV of one generated record, for plotting.

use std::fmt::Write;

use dmgen_core::GenerationRecord;

const POSE_COLS: [&str; 7] = ["px", "py", "pz", "qw", "qx", "qy", "qz"];

fn pose_header(out: &mut Vec<String>, prefix: &str) {
    out.extend(POSE_COLS.iter().map(|c| format!("{prefix}_{c}")));
}

/// Shortest round-trip form, with an exponent for tiny or huge values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Column names: `t`, the ee pose, `gripper`, every object pose, the goal pose, `phase`, `subtask`.
pub fn header(record: &GenerationRecord) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    pose_header(&mut cols, "ee");
    cols.push("gripper".into());
    for id in &record.objects {
        pose_header(&mut cols, id.as_str());
    }
    pose_header(&mut cols, "goal");
    cols.push("phase".into());
    cols.push("subtask".into());
    cols
}

/// One row per logged step; `t` is the time at the end of the step.
pub fn to_csv(record: &GenerationRecord, dt: f64) -> String {
    let mut out = header(record).join(",");
    out.push('\n');
    for (k, l) in record.log.iter().enumerate() {
        let mut row = vec![num((k + 1) as f64 * dt)];
        let mut pose = |p: [f64; 7]| row.extend(p.iter().map(|v| num(*v)));
        pose(l.state.ee_pose.to_array());
        for p in &l.state.object_poses {
            pose(p.to_array());
        }
        pose(l.goal.to_array());
        row.insert(8, u8::from(l.state.gripper.is_closed()).to_string());
        row.push(num(l.phase));
        row.push(l.subtask.to_string());
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmgen_core::scene::builtin;
    use dmgen_core::{synthesize_demos, DmpConfig, ExpertConfig, GenerationConfig, PreparedSource, SourceDataset};

    #[test]
    fn rows_follow_the_log() {
        let spec = builtin::stack();
        let demos = synthesize_demos(&spec, "D0", 1, 1, &ExpertConfig::default()).unwrap();
        let prep = PreparedSource::new(SourceDataset::from_demos(&spec, demos).unwrap(), &spec, &DmpConfig::default())
            .unwrap();
        let rec = dmgen_core::generate_trial(&prep, &spec, &GenerationConfig::new("D0"), 5);
        let csv = to_csv(&rec, 0.05);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), rec.log.len() + 1);
        let width = 1 + 7 + 1 + 7 * rec.objects.len() + 7 + 2;
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        assert!(lines[0].starts_with("t,ee_px,") && lines[0].contains(",gripper,red_px,"));

        // Phase decreases strictly inside each segment.
        for w in rec.log.windows(2) {
            if w[0].subtask == w[1].subtask {
                assert!(w[1].phase < w[0].phase);
            }
        }

        let mut empty = rec.clone();
        empty.log.clear();
        assert_eq!(to_csv(&empty, 0.05).lines().count(), 1);
    }
}
