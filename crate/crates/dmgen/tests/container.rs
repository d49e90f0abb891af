use dmgen::format::{self, decode_dataset, decode_source, encode_dataset, encode_source, HEADER_LEN};
use dmgen::FormatError;
use dmgen_core::scene::builtin;
use dmgen_core::{
    synthesize_demos, DmpConfig, ExpertConfig, GeneratedDataset, GenerationConfig, PerturbationSchedule,
    PreparedSource, Region, SelectionStrategy, SourceDataset, TaskSpec,
};

fn source(spec: &TaskSpec, n: usize) -> SourceDataset {
    let demos = synthesize_demos(spec, "D0", 11, n, &ExpertConfig::default()).unwrap();
    SourceDataset::from_demos(spec, demos).unwrap()
}

fn campaign(target: usize, seed0: u64) -> (TaskSpec, GenerationConfig, GeneratedDataset) {
    let spec = builtin::stack();
    let prep = PreparedSource::new(source(&spec, 1), &spec, &DmpConfig::default()).unwrap();
    let mut config = GenerationConfig::new("D1");
    config.perturbation = Some(PerturbationSchedule {
        target_object: "red".into(),
        subtask_index: 0,
        fraction: 0.8,
        displacement: Region::centered([0.0; 3], [0.05, 0.05, 0.0]),
        yaw_range: [-0.2, 0.2],
        max_events: 1,
    });
    let ds = dmgen::parallel::generate_dataset(&prep, &spec, &config, target, seed0, None, Some(2)).unwrap();
    (spec, config, ds)
}

#[test]
fn ten_record_dataset_round_trips_bit_exact() {
    let (spec, config, ds) = campaign(10, 100);
    assert_eq!(ds.records.len(), 10);
    let enc = encode_dataset(&spec, &config, &ds);
    let back = decode_dataset(&enc.bytes).unwrap();
    assert_eq!(back.dataset, ds);
    assert_eq!(back.config, config);
    assert_eq!(back.spec, spec);
    // Equality on floats could hide -0.0 vs 0.0; re-encoding compares bits.
    assert_eq!(encode_dataset(&back.spec, &back.config, &back.dataset).bytes, enc.bytes);
}

#[test]
fn record_offsets_point_at_blocks() {
    let (spec, config, ds) = campaign(3, 0);
    let enc = encode_dataset(&spec, &config, &ds);
    assert_eq!(enc.blocks.len(), 3);
    let mut end = enc.blocks[0].0;
    for &(offset, len) in &enc.blocks {
        assert_eq!(offset, end);
        let o = offset as usize;
        let payload = u64::from_le_bytes(enc.bytes[o..o + 8].try_into().unwrap());
        assert_eq!(payload + 12, len);
        end = offset + len;
    }
    assert_eq!(end as usize, enc.bytes.len());
}

#[test]
fn any_corrupted_payload_byte_is_caught() {
    let (spec, config, ds) = campaign(2, 5);
    let bytes = encode_dataset(&spec, &config, &ds).bytes;
    // Sample payload bytes across every block, skipping length prefixes.
    for i in (HEADER_LEN..bytes.len()).step_by(97) {
        let mut bad = bytes.clone();
        bad[i] ^= 0x40;
        match decode_dataset(&bad) {
            Err(FormatError::ChecksumMismatch(_)) | Err(FormatError::Truncated) => {}
            other => panic!("byte {i}: {other:?}"),
        }
    }
}

#[test]
fn source_round_trips() {
    let spec = builtin::square();
    let demos = synthesize_demos(&spec, "D1", 4, 2, &ExpertConfig::default()).unwrap();
    let src = SourceDataset::from_demos(&spec, demos).unwrap();
    let bytes = encode_source(&spec, 4, &src);
    let back = decode_source(&bytes).unwrap();
    assert_eq!((back.seed, &back.source, &back.spec), (4, &src, &spec));
    assert_eq!(encode_source(&back.spec, 4, &back.source), bytes);
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, mut config, ds) = campaign(2, 9);
    config.strategy = SelectionStrategy::Orientation;
    config.controller = dmgen_core::ControllerModel::perfect(0.05);
    let path = dir.path().join("ds.dmg");
    format::write_dataset(&path, &spec, &config, &ds).unwrap();
    let back = format::read_dataset(&path).unwrap();
    assert_eq!((back.dataset, back.config), (ds, config));
    assert!(matches!(format::read_source(&path), Err(FormatError::KindMismatch { .. })));
    assert!(matches!(format::read_dataset(&dir.path().join("missing")), Err(FormatError::Io(_))));
}
