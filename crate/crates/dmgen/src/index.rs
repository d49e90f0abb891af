//! Human-readable JSON index written next to a dataset file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dmgen_core::{dgr_report, DgrRow, DmpParams, GeneratedDataset, GenerationConfig, Outcome, PreparedSource};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub index: usize,
    pub seed: u64,
    /// Byte offset of the record block in the container.
    pub offset: u64,
    /// Block length including its length prefix and checksum.
    pub length: u64,
    pub steps: usize,
    pub selected_demo: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptEntry {
    pub seed: u64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub task: String,
    pub variant: String,
    pub seed_start: u64,
    pub seed_end: u64,
    pub attempts: usize,
    pub successes: usize,
    pub dgr: String,
    pub dgr_rows: Vec<DgrRow>,
    pub failures: BTreeMap<String, usize>,
    /// Non-finite controller values appear as `null`.
    pub config: serde_json::Value,
    pub records: Vec<RecordEntry>,
    pub outcomes: Vec<AttemptEntry>,
    /// Fitted primitives per source demo and segment.
    pub dmp_params: Vec<Vec<DmpParams>>,
}

/// `<dataset>.index.json`
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".index.json");
    PathBuf::from(name)
}

pub fn build(
    ds: &GeneratedDataset,
    config: &GenerationConfig,
    blocks: &[(u64, u64)],
    prepared: Option<&PreparedSource>,
) -> Index {
    let rows = dgr_report([ds]);
    let mut failures = BTreeMap::new();
    for a in &ds.attempts {
        if let Outcome::Failure(r) = &a.outcome {
            *failures.entry(r.to_string()).or_default() += 1;
        }
    }
    let outcome = |o: &Outcome| match o {
        Outcome::Success => "success".to_string(),
        Outcome::Failure(r) => r.to_string(),
    };
    Index {
        task: ds.task_id.clone(),
        variant: ds.variant.clone(),
        seed_start: ds.seed0,
        seed_end: ds.seed0.wrapping_add(ds.n_attempts() as u64),
        attempts: ds.n_attempts(),
        successes: ds.n_successes(),
        dgr: rows.first().map_or_else(|| "-".into(), |r| r.percent()),
        dgr_rows: rows,
        failures,
        config: serde_json::to_value(config).unwrap_or_default(),
        records: ds
            .records
            .iter()
            .zip(blocks)
            .enumerate()
            .map(|(index, (r, (offset, length)))| RecordEntry {
                index,
                seed: r.seed,
                offset: *offset,
                length: *length,
                steps: r.log.len(),
                selected_demo: r.selected_demo,
            })
            .collect(),
        outcomes: ds.attempts.iter().map(|a| AttemptEntry { seed: a.seed, outcome: outcome(&a.outcome) }).collect(),
        dmp_params: prepared
            .map(|p| p.segments.iter().map(|d| d.iter().map(|s| s.params.clone()).collect()).collect())
            .unwrap_or_default(),
    }
}

pub fn write(path: &Path, index: &Index) -> Result<(), FormatError> {
    let json = serde_json::to_string_pretty(index).map_err(|e| FormatError::Malformed(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Index, FormatError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::Malformed(format!("index: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/ds.dmg")), PathBuf::from("out/ds.dmg.index.json"));
    }

    #[test]
    fn empty_dataset_index() {
        let ds = GeneratedDataset::new("stack", "D0", 9);
        let idx = build(&ds, &GenerationConfig::new("D0"), &[], None);
        assert_eq!((idx.attempts, idx.successes, idx.seed_end), (0, 0, 9));
        assert_eq!(idx.dgr, "-");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.json");
        write(&path, &idx).unwrap();
        assert_eq!(read(&path).unwrap(), idx);
    }
}
