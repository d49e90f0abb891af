//! DGR tables and failure breakdowns, as aligned text or CSV.

use std::collections::BTreeMap;
use std::fmt::Write;

use dmgen_core::{DgrRow, GeneratedDataset, Outcome, TaskSpec};

/// Failures grouped by the subtask they happened in and their label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtaskRow {
    /// `None` for failures outside any subtask (reset, final check).
    pub subtask: Option<usize>,
    pub label: String,
    pub count: usize,
}

/// How many attempts got through each subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtaskReach {
    pub subtask: usize,
    pub reached: usize,
    pub completed: usize,
}

pub fn failure_breakdown(ds: &GeneratedDataset) -> Vec<SubtaskRow> {
    let mut counts: BTreeMap<(Option<usize>, &str), usize> = BTreeMap::new();
    for a in &ds.attempts {
        if let Outcome::Failure(reason) = &a.outcome {
            *counts.entry((reason.subtask(), reason.label())).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((subtask, label), count)| SubtaskRow { subtask, label: label.to_string(), count })
        .collect()
}

/// Per-subtask completion counts. A trial that failed in subtask `i`
/// reached it without completing it; crowded resets reach nothing.
pub fn subtask_reach(ds: &GeneratedDataset, n_subtasks: usize) -> Vec<SubtaskReach> {
    let mut rows: Vec<SubtaskReach> =
        (0..n_subtasks).map(|subtask| SubtaskReach { subtask, reached: 0, completed: 0 }).collect();
    for a in &ds.attempts {
        let (reached, completed) = match &a.outcome {
            Outcome::Success => (n_subtasks, n_subtasks),
            Outcome::Failure(r) => match (r.label(), r.subtask()) {
                ("crowded-scene", _) => (0, 0),
                (_, Some(i)) => (i + 1, i),
                (_, None) => (n_subtasks, n_subtasks),
            },
        };
        for row in rows.iter_mut().take(reached) {
            row.reached += 1;
            row.completed += usize::from(row.subtask < completed);
        }
    }
    rows
}

fn rate(num: usize, den: usize) -> String {
    if den == 0 {
        return "-".into();
    }
    DgrRow { variant: String::new(), attempts: den, successes: num }.percent()
}

/// Renders rows with each column padded to its widest cell.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for r in rows {
        line(&mut out, r);
    }
    out
}

pub fn dgr_table(rows: &[DgrRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.variant.clone(), r.attempts.to_string(), r.successes.to_string(), r.percent()])
        .collect();
    table(&["variant", "attempts", "successes", "DGR"], &cells)
}

pub fn dgr_csv(rows: &[DgrRow]) -> String {
    let mut out = String::from("variant,attempts,successes,dgr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.variant, r.attempts, r.successes, r.percent());
    }
    out
}

fn subtask_name(spec: &TaskSpec, i: Option<usize>) -> String {
    match i {
        Some(i) => match spec.subtasks.get(i) {
            Some(s) => format!("{i} ({})", s.reference_object),
            None => i.to_string(),
        },
        None => "-".into(),
    }
}

pub fn subtask_table(spec: &TaskSpec, ds: &GeneratedDataset) -> String {
    let reach: Vec<Vec<String>> = subtask_reach(ds, spec.subtasks.len())
        .iter()
        .map(|r| {
            vec![
                subtask_name(spec, Some(r.subtask)),
                r.reached.to_string(),
                r.completed.to_string(),
                rate(r.completed, r.reached),
            ]
        })
        .collect();
    let failures: Vec<Vec<String>> = failure_breakdown(ds)
        .iter()
        .map(|f| vec![subtask_name(spec, f.subtask), f.label.clone(), f.count.to_string()])
        .collect();
    let mut out = table(&["subtask", "reached", "completed", "rate"], &reach);
    out.push('\n');
    if failures.is_empty() {
        out.push_str("no failures\n");
    } else {
        out.push_str(&table(&["subtask", "failure", "count"], &failures));
    }
    out
}

pub fn subtask_csv(spec: &TaskSpec, ds: &GeneratedDataset) -> String {
    let mut out = String::from("subtask,reached,completed,rate\n");
    for r in subtask_reach(ds, spec.subtasks.len()) {
        let _ = writeln!(out, "{},{},{},{}", r.subtask, r.reached, r.completed, rate(r.completed, r.reached));
    }
    out.push_str("\nsubtask,failure,count\n");
    for f in failure_breakdown(ds) {
        let s = f.subtask.map_or(String::new(), |i| i.to_string());
        let _ = writeln!(out, "{s},{},{}", f.label, f.count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmgen_core::scene::builtin;
    use dmgen_core::{dgr_report, FailureReason, TrialOutcome};

    fn dataset(outcomes: &[Outcome]) -> GeneratedDataset {
        let mut ds = GeneratedDataset::new("stack", "D0", 0);
        ds.attempts = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| TrialOutcome { seed: i as u64, selected_demo: 0, outcome: o.clone() })
            .collect();
        ds
    }

    fn missed(subtask: usize) -> Outcome {
        Outcome::Failure(FailureReason::SubtaskIncomplete { subtask, label: "grasp-missed".into() })
    }

    #[test]
    fn table_formats_paper_style_rates() {
        let rows = vec![
            DgrRow { variant: "D0".into(), attempts: 100, successes: 95 },
            DgrRow { variant: "D1".into(), attempts: 1000, successes: 687 },
        ];
        let t = dgr_table(&rows);
        assert!(t.contains("95.0%") && t.contains("68.7%"), "{t}");
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2].len(), lines[3].len());
        assert_eq!(dgr_csv(&rows), "variant,attempts,successes,dgr\nD0,100,95,95.0%\nD1,1000,687,68.7%\n");
    }

    #[test]
    fn zero_attempt_rows_are_dropped() {
        let ds = dataset(&[]);
        assert!(dgr_report([&ds]).is_empty());
        assert_eq!(dgr_csv(&dgr_report([&ds])), "variant,attempts,successes,dgr\n");
    }

    #[test]
    fn breakdown_counts_each_subtask() {
        let ds = dataset(&[
            Outcome::Success,
            missed(0),
            missed(0),
            Outcome::Failure(FailureReason::OrientationChart { subtask: 1 }),
            Outcome::Failure(FailureReason::CrowdedScene),
            Outcome::Failure(FailureReason::SuccessPredicateFalse),
        ]);
        let reach = subtask_reach(&ds, 2);
        assert_eq!(reach[0], SubtaskReach { subtask: 0, reached: 5, completed: 3 });
        assert_eq!(reach[1], SubtaskReach { subtask: 1, reached: 3, completed: 2 });
        let f = failure_breakdown(&ds);
        assert_eq!(f.len(), 4);
        assert!(f.contains(&SubtaskRow { subtask: Some(0), label: "grasp-missed".into(), count: 2 }));
        let text = subtask_table(&builtin::stack(), &ds);
        assert!(text.contains("0 (red)") && text.contains("crowded-scene"), "{text}");
        assert!(subtask_csv(&builtin::stack(), &ds).contains("0,grasp-missed,2"));
    }
}
