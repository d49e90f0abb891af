//! Dataset container.
//!
//! ```text
//! header   magic "DMGENDS\0" | version u32 | kind u32 | spec sha256 [32]
//!          | seed_start u64 | seed_end u64 | crc32 of the preceding bytes u32
//! block*   payload length u64 | payload | crc32 of payload u32
//! ```
//!
//! All integers and doubles are little-endian. The first block holds the
//! metadata (task spec as JSON, campaign settings, attempt outcomes); each
//! following block holds one generated record or one source demonstration.

use std::fs;
use std::path::Path;

use dmgen_core::{GeneratedDataset, GenerationConfig, SourceDataset, TaskSpec};
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::FormatError;

pub const MAGIC: [u8; 8] = *b"DMGENDS\0";
pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 4 + 32 + 8 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Source,
    Generated,
}

impl Kind {
    fn code(self) -> u32 {
        match self {
            Kind::Source => 1,
            Kind::Generated => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self, FormatError> {
        match c {
            1 => Ok(Kind::Source),
            2 => Ok(Kind::Generated),
            _ => Err(FormatError::Malformed(format!("unknown file kind {c}"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Source => "source",
            Kind::Generated => "generated",
        }
    }
}

/// Fixed-size file header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub spec_hash: [u8; 32],
    pub seed_start: u64,
    /// Exclusive.
    pub seed_end: u64,
}

/// Serialized bytes plus where each record block starts.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    /// `(offset, total block length)` of every record block, in order.
    pub blocks: Vec<(u64, u64)>,
}

/// A generated dataset as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub spec: TaskSpec,
    pub config: GenerationConfig,
    pub dataset: GeneratedDataset,
}

/// A source dataset as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFile {
    pub spec: TaskSpec,
    pub seed: u64,
    pub source: SourceDataset,
}

pub fn spec_json(spec: &TaskSpec) -> String {
    serde_json::to_string(spec).expect("task specs always serialize")
}

/// SHA-256 of the spec's canonical JSON form.
pub fn spec_hash(spec: &TaskSpec) -> [u8; 32] {
    Sha256::digest(spec_json(spec).as_bytes()).into()
}

fn header_bytes(h: &Header) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(&MAGIC);
    w.u32(SCHEMA_VERSION);
    w.u32(h.kind.code());
    w.buf.extend_from_slice(&h.spec_hash);
    w.u64(h.seed_start);
    w.u64(h.seed_end);
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

fn push_block(out: &mut Vec<u8>, payload: &[u8]) -> (u64, u64) {
    let offset = out.len() as u64;
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    (offset, out.len() as u64 - offset)
}

pub fn encode_dataset(spec: &TaskSpec, config: &GenerationConfig, ds: &GeneratedDataset) -> Encoded {
    let header = Header {
        kind: Kind::Generated,
        spec_hash: spec_hash(spec),
        seed_start: ds.seed0,
        seed_end: ds.seed0.wrapping_add(ds.n_attempts() as u64),
    };
    let mut bytes = header_bytes(&header);

    let mut meta = Writer::default();
    meta.str(&spec_json(spec));
    meta.config(config);
    meta.str(&ds.task_id);
    meta.str(&ds.variant);
    meta.u64(ds.seed0);
    meta.count(ds.attempts.len());
    for a in &ds.attempts {
        meta.trial_outcome(a);
    }
    meta.count(ds.records.len());
    push_block(&mut bytes, &meta.buf);

    let blocks = ds
        .records
        .iter()
        .map(|r| {
            let mut w = Writer::default();
            w.record(r);
            push_block(&mut bytes, &w.buf)
        })
        .collect();
    Encoded { bytes, blocks }
}

pub fn encode_source(spec: &TaskSpec, seed: u64, src: &SourceDataset) -> Vec<u8> {
    let header = Header {
        kind: Kind::Source,
        spec_hash: spec_hash(spec),
        seed_start: seed,
        seed_end: seed.wrapping_add(src.demos.len() as u64),
    };
    let mut bytes = header_bytes(&header);
    let mut meta = Writer::default();
    meta.str(&spec_json(spec));
    meta.str(&src.task_id);
    meta.count(src.demos.len());
    push_block(&mut bytes, &meta.buf);
    for d in &src.demos {
        let mut w = Writer::default();
        w.source_demo(d);
        push_block(&mut bytes, &w.buf);
    }
    bytes
}

pub fn read_header(bytes: &[u8]) -> Result<Header, FormatError> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
            FormatError::Truncated
        } else {
            FormatError::BadMagic
        });
    }
    let head = bytes.get(..HEADER_LEN).ok_or(FormatError::Truncated)?;
    let mut r = Reader::new(&head[MAGIC.len()..]);
    let version = r.u32()?;
    if version != SCHEMA_VERSION {
        return Err(FormatError::SchemaVersionMismatch { expected: SCHEMA_VERSION, found: version });
    }
    let crc = u32::from_le_bytes(head[HEADER_LEN - 4..].try_into().expect("4 bytes"));
    if crc32fast::hash(&head[..HEADER_LEN - 4]) != crc {
        return Err(FormatError::ChecksumMismatch("header".into()));
    }
    let kind = Kind::from_code(r.u32()?)?;
    let mut spec_hash = [0u8; 32];
    spec_hash.copy_from_slice(r.take(32)?);
    Ok(Header { kind, spec_hash, seed_start: r.u64()?, seed_end: r.u64()? })
}

/// Splits the body after the header into checksummed block payloads.
fn blocks(bytes: &[u8]) -> Result<Vec<&[u8]>, FormatError> {
    let mut r = Reader::new(&bytes[HEADER_LEN..]);
    let mut out = Vec::new();
    while !r.is_done() {
        let n = usize::try_from(r.u64()?).map_err(|_| FormatError::Truncated)?;
        let payload = r.take(n)?;
        let crc = r.u32()?;
        if crc32fast::hash(payload) != crc {
            return Err(FormatError::ChecksumMismatch(format!("block {}", out.len())));
        }
        out.push(payload);
    }
    Ok(out)
}

fn expect_kind(h: &Header, kind: Kind) -> Result<(), FormatError> {
    if h.kind != kind {
        return Err(FormatError::KindMismatch { expected: kind.name(), found: h.kind.name() });
    }
    Ok(())
}

fn read_spec(r: &mut Reader<'_>, header: &Header) -> Result<TaskSpec, FormatError> {
    let json = r.str()?;
    if <[u8; 32]>::from(Sha256::digest(json.as_bytes())) != header.spec_hash {
        return Err(FormatError::SpecMismatch);
    }
    serde_json::from_str(&json).map_err(|e| FormatError::Malformed(format!("task spec: {e}")))
}

fn finish(r: &Reader<'_>, what: &str) -> Result<(), FormatError> {
    if r.is_done() {
        Ok(())
    } else {
        Err(FormatError::Malformed(format!("trailing bytes in {what}")))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile, FormatError> {
    let header = read_header(bytes)?;
    expect_kind(&header, Kind::Generated)?;
    let blocks = blocks(bytes)?;
    let (meta, rest) = blocks.split_first().ok_or(FormatError::Truncated)?;
    let mut r = Reader::new(meta);
    let spec = read_spec(&mut r, &header)?;
    let config = r.config()?;
    let task_id = r.str()?;
    let variant = r.str()?;
    let seed0 = r.u64()?;
    let n = r.count()?;
    let attempts = (0..n).map(|_| r.trial_outcome()).collect::<Result<Vec<_>, _>>()?;
    let n_records = r.count()?;
    finish(&r, "metadata")?;
    if n_records != rest.len() {
        return Err(if n_records > rest.len() {
            FormatError::Truncated
        } else {
            FormatError::Malformed("more record blocks than announced".into())
        });
    }
    let records = rest
        .iter()
        .map(|b| {
            let mut r = Reader::new(b);
            let rec = r.record()?;
            finish(&r, "record")?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let dataset = GeneratedDataset { task_id, variant, seed0, records, attempts };
    Ok(DatasetFile { spec, config, dataset })
}

pub fn decode_source(bytes: &[u8]) -> Result<SourceFile, FormatError> {
    let header = read_header(bytes)?;
    expect_kind(&header, Kind::Source)?;
    let blocks = blocks(bytes)?;
    let (meta, rest) = blocks.split_first().ok_or(FormatError::Truncated)?;
    let mut r = Reader::new(meta);
    let spec = read_spec(&mut r, &header)?;
    let task_id = r.str()?;
    let n = r.count()?;
    finish(&r, "metadata")?;
    if n != rest.len() {
        return Err(FormatError::Malformed(format!("expected {n} demo blocks, found {}", rest.len())));
    }
    let demos = rest
        .iter()
        .map(|b| {
            let mut r = Reader::new(b);
            let d = r.source_demo()?;
            finish(&r, "demo")?;
            Ok(d)
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(SourceFile { spec, seed: header.seed_start, source: SourceDataset { task_id, demos } })
}

/// Writes a generated dataset; returns the record block offsets for the index.
pub fn write_dataset(
    path: &Path,
    spec: &TaskSpec,
    config: &GenerationConfig,
    ds: &GeneratedDataset,
) -> Result<Vec<(u64, u64)>, FormatError> {
    let enc = encode_dataset(spec, config, ds);
    fs::write(path, &enc.bytes)?;
    Ok(enc.blocks)
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile, FormatError> {
    decode_dataset(&fs::read(path)?)
}

pub fn write_source(path: &Path, spec: &TaskSpec, seed: u64, src: &SourceDataset) -> Result<(), FormatError> {
    fs::write(path, encode_source(spec, seed, src))?;
    Ok(())
}

pub fn read_source(path: &Path) -> Result<SourceFile, FormatError> {
    decode_source(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmgen_core::scene::builtin;

    fn empty() -> (TaskSpec, GenerationConfig, GeneratedDataset) {
        let spec = builtin::stack();
        (spec, GenerationConfig::new("D0"), GeneratedDataset::new("stack", "D0", 3))
    }

    #[test]
    fn empty_dataset_round_trips() {
        let (spec, mut config, ds) = empty();
        config.controller = dmgen_core::ControllerModel::perfect(0.05);
        let enc = encode_dataset(&spec, &config, &ds);
        assert!(enc.blocks.is_empty());
        let back = decode_dataset(&enc.bytes).unwrap();
        assert_eq!(back.dataset, ds);
        assert_eq!(back.spec, spec);
        assert_eq!(back.config, config);
    }

    #[test]
    fn header_fields() {
        let (spec, config, ds) = empty();
        let enc = encode_dataset(&spec, &config, &ds);
        let h = read_header(&enc.bytes).unwrap();
        assert_eq!(h.kind, Kind::Generated);
        assert_eq!(h.spec_hash, spec_hash(&spec));
        assert_eq!((h.seed_start, h.seed_end), (3, 3));
    }

    #[test]
    fn rejects_foreign_and_mismatched_files() {
        let (spec, config, ds) = empty();
        let mut bytes = encode_dataset(&spec, &config, &ds).bytes;
        assert!(matches!(decode_source(&bytes), Err(FormatError::KindMismatch { .. })));
        assert!(matches!(decode_dataset(b"PNG\x89 not ours at all"), Err(FormatError::BadMagic)));
        assert!(matches!(decode_dataset(b"DMG"), Err(FormatError::Truncated)));

        bytes[8] = 9;
        assert!(matches!(decode_dataset(&bytes), Err(FormatError::SchemaVersionMismatch { found: 9, .. })));
        bytes[8] = 1;
        bytes[20] ^= 1;
        assert!(matches!(decode_dataset(&bytes), Err(FormatError::ChecksumMismatch(_))));
    }

    #[test]
    fn truncated_block_is_reported() {
        let (spec, config, ds) = empty();
        let bytes = encode_dataset(&spec, &config, &ds).bytes;
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 2]), Err(FormatError::Truncated)));
    }
}
