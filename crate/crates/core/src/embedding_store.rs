//! Pooled embeddings and their on-disk format.
//!
//! One file holds every pooled vector for a single (dataset, split, setup)
//! triple. Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "PFEMB001"
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON:
//!              {dataset, split, input_setup, source_model, ndim, count, format_version}
//! payload      count records of
//!                id_len u32 | id UTF-8 | label u8 | ndim x f32
//! trailer      u64 CRC-64/XZ of the payload bytes
//! ```
//!
//! Records are stored in ascending `instance_id` order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Veracity;

pub const MAGIC: &[u8; 8] = b"PFEMB001";
pub const FORMAT_VERSION: u32 = 1;

const CRC64: crc::Crc<u64> = crc::Crc::<u64>::new(&crc::CRC_64_XZ);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty token sequence")]
    EmptyTokens,
    #[error("non-finite token value at row {row}, column {col}")]
    NonFiniteToken { row: usize, col: usize },
    #[error("ragged token matrix: row {row} has {found} columns, expected {expected}")]
    RaggedTokens {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch for {id}: expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("ndim must be positive")]
    ZeroDim,
    #[error("duplicate instance_id: {0}")]
    DuplicateId(String),
    #[error("records out of order at instance_id {0}")]
    Unsorted(String),
    #[error("count mismatch: header declares {declared}, found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("truncated payload")]
    Truncated,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("non-finite value in {id} at component {index}")]
    NonFinite { id: String, index: usize },
    #[error("invalid label {value} for {id}")]
    InvalidLabel { id: String, value: u8 },
    #[error("invalid UTF-8 instance id")]
    InvalidId,
    #[error("invalid header: {0}")]
    Header(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("label conflict: {0}")]
    LabelConflict(String),
    #[error("cannot join sets from different {0}")]
    MixedSets(&'static str),
    #[error("setup {0} appears more than once")]
    DuplicateSetup(InputSetup),
    #[error("setup {0} has no embedding set")]
    MissingSetup(InputSetup),
    #[error("no embedding sets to join")]
    NoSets,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Mocheg,
    Factify2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Which inputs were fed to the encoder that produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSetup {
    /// Claim text and claim image through a VLM.
    MmClaim,
    /// Evidence text and evidence image through a VLM.
    MmEvidence,
    /// All textual content through a VLM.
    MmText,
    /// Images only through a VLM.
    MmImage,
    /// Claim text through a language model.
    Claim,
    /// Claim image through a vision encoder.
    ClaimImage,
    /// Evidence text through a language model.
    EvidenceText,
    /// Evidence image through a vision encoder.
    EvidenceImage,
}

impl InputSetup {
    pub const ALL: [InputSetup; 8] = [
        InputSetup::MmClaim,
        InputSetup::MmEvidence,
        InputSetup::MmText,
        InputSetup::MmImage,
        InputSetup::Claim,
        InputSetup::ClaimImage,
        InputSetup::EvidenceText,
        InputSetup::EvidenceImage,
    ];

    pub fn key(self) -> &'static str {
        match self {
            InputSetup::MmClaim => "mm_claim",
            InputSetup::MmEvidence => "mm_evidence",
            InputSetup::MmText => "mm_text",
            InputSetup::MmImage => "mm_image",
            InputSetup::Claim => "claim",
            InputSetup::ClaimImage => "claim_image",
            InputSetup::EvidenceText => "evidence_text",
            InputSetup::EvidenceImage => "evidence_image",
        }
    }
}

macro_rules! key_enum_text {
    ($ty:ty, $($variant:expr => $key:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $(v if *v == $variant => $key,)+ _ => unreachable!() };
                f.write_str(s)
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($key => Ok($variant),)+
                    other => Err(format!("unknown {}: {other}", stringify!($ty))),
                }
            }
        }
    };
}

key_enum_text!(DatasetId, DatasetId::Mocheg => "mocheg", DatasetId::Factify2 => "factify2");
key_enum_text!(Split, Split::Train => "train", Split::Val => "val", Split::Test => "test");
key_enum_text!(
    InputSetup,
    InputSetup::MmClaim => "mm_claim",
    InputSetup::MmEvidence => "mm_evidence",
    InputSetup::MmText => "mm_text",
    InputSetup::MmImage => "mm_image",
    InputSetup::Claim => "claim",
    InputSetup::ClaimImage => "claim_image",
    InputSetup::EvidenceText => "evidence_text",
    InputSetup::EvidenceImage => "evidence_image",
);

/// Named setup lists. Vector order within a preset is part of the model.
pub const PRESETS: &[(&str, &[InputSetup])] = &[
    ("mm_claim", &[InputSetup::MmClaim]),
    (
        "mm_claim+mm_evidence",
        &[InputSetup::MmClaim, InputSetup::MmEvidence],
    ),
    ("input1", &[InputSetup::Claim, InputSetup::ClaimImage]),
    (
        "input2",
        &[
            InputSetup::Claim,
            InputSetup::ClaimImage,
            InputSetup::EvidenceText,
            InputSetup::EvidenceImage,
        ],
    ),
    ("input3", &[InputSetup::MmClaim, InputSetup::MmImage]),
    ("input4", &[InputSetup::MmText, InputSetup::MmImage]),
];

pub fn preset(name: &str) -> Option<&'static [InputSetup]> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub dataset: DatasetId,
    pub split: Split,
    pub input_setup: InputSetup,
    pub source_model: String,
    pub ndim: usize,
    pub count: usize,
    pub format_version: u32,
}

impl EmbeddingManifest {
    pub fn new(
        dataset: DatasetId,
        split: Split,
        input_setup: InputSetup,
        source_model: impl Into<String>,
        ndim: usize,
        count: usize,
    ) -> Self {
        Self {
            dataset,
            split,
            input_setup,
            source_model: source_model.into(),
            ndim,
            count,
            format_version: FORMAT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub instance_id: String,
    pub vector: Vec<f32>,
    pub label: Veracity,
}

/// A loaded embedding file. Immutable once read.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub manifest: EmbeddingManifest,
    pub records: Vec<PooledEmbedding>,
}

/// Averages token hidden states into one vector, accumulating in f64.
pub fn mean_pool<R, T>(tokens: &[R]) -> Result<Vec<f32>>
where
    R: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let first = tokens.first().ok_or(StoreError::EmptyTokens)?;
    let ndim = first.as_ref().len();
    if ndim == 0 {
        return Err(StoreError::ZeroDim);
    }
    let mut sums = vec![0f64; ndim];
    for (row, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if tok.len() != ndim {
            return Err(StoreError::RaggedTokens {
                row,
                expected: ndim,
                found: tok.len(),
            });
        }
        for (col, (acc, &x)) in sums.iter_mut().zip(tok).enumerate() {
            let x: f64 = x.into();
            if !x.is_finite() {
                return Err(StoreError::NonFiniteToken { row, col });
            }
            *acc += x;
        }
    }
    let n = tokens.len() as f64;
    Ok(sums.into_iter().map(|s| (s / n) as f32).collect())
}

fn validate_records(manifest: &EmbeddingManifest, records: &[PooledEmbedding]) -> Result<()> {
    if manifest.ndim == 0 {
        return Err(StoreError::ZeroDim);
    }
    if manifest.count != records.len() {
        return Err(StoreError::CountMismatch {
            declared: manifest.count,
            found: records.len(),
        });
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if r.vector.len() != manifest.ndim {
            return Err(StoreError::DimensionMismatch {
                id: r.instance_id.clone(),
                expected: manifest.ndim,
                found: r.vector.len(),
            });
        }
        if let Some(index) = r.vector.iter().position(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite {
                id: r.instance_id.clone(),
                index,
            });
        }
        if !seen.insert(r.instance_id.as_str()) {
            return Err(StoreError::DuplicateId(r.instance_id.clone()));
        }
    }
    Ok(())
}

/// Serializes a set to bytes. Records are emitted in ascending id order.
pub fn encode_embedding_set(
    manifest: &EmbeddingManifest,
    records: &[PooledEmbedding],
) -> Result<Vec<u8>> {
    validate_records(manifest, records)?;
    let mut order: Vec<&PooledEmbedding> = records.iter().collect();
    order.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));

    let header = serde_json::to_vec(manifest).map_err(|e| StoreError::Header(e.to_string()))?;
    let record_bytes: usize = records
        .iter()
        .map(|r| 4 + r.instance_id.len() + 1 + 4 * manifest.ndim)
        .sum();
    let mut out = Vec::with_capacity(8 + 4 + header.len() + record_bytes + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let payload_start = out.len();
    for r in order {
        out.extend_from_slice(&(r.instance_id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.instance_id.as_bytes());
        out.push(r.label.index() as u8);
        for x in &r.vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = CRC64.checksum(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Writes a set to `path`. The file is written beside the target and renamed
/// into place so readers never observe a partial file.
pub fn write_embedding_set(
    manifest: &EmbeddingManifest,
    records: &[PooledEmbedding],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embedding_set(manifest, records)?;
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(&bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn read_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embedding_set(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(StoreError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(StoreError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn parse_record(cur: &mut Cursor<'_>, ndim: usize) -> Result<PooledEmbedding> {
    let id_len = cur.u32()? as usize;
    let id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|_| StoreError::InvalidId)?
        .to_owned();
    let raw_label = cur.take(1)?[0];
    let label = Veracity::try_from(raw_label).map_err(|value| StoreError::InvalidLabel {
        id: id.clone(),
        value,
    })?;
    let data = cur.take(ndim.checked_mul(4).ok_or(StoreError::Truncated)?)?;
    let mut vector = Vec::with_capacity(ndim);
    for (index, chunk) in data.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().unwrap());
        if !x.is_finite() {
            return Err(StoreError::NonFinite { id, index });
        }
        vector.push(x);
    }
    Ok(PooledEmbedding {
        instance_id: id,
        vector,
        label,
    })
}

pub fn decode_embedding_set(bytes: &[u8]) -> Result<EmbeddingSet> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(StoreError::BadMagic);
    }
    let mut cur = Cursor { buf: bytes, pos: 0 };
    cur.take(MAGIC.len())?;
    let header_len = cur.u32()? as usize;
    let manifest: EmbeddingManifest = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| StoreError::Header(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(manifest.format_version));
    }
    if manifest.ndim == 0 {
        return Err(StoreError::ZeroDim);
    }
    let body = &bytes[cur.pos..];

    // An intact trailer means the payload is exactly what the writer emitted,
    // so any disagreement with the header count is a count mismatch rather
    // than damage.
    let intact = body.len() >= 8 && {
        let (payload, trailer) = body.split_at(body.len() - 8);
        CRC64.checksum(payload) == u64::from_le_bytes(trailer.try_into().unwrap())
    };

    let records = if intact {
        let mut p = Cursor {
            buf: &body[..body.len() - 8],
            pos: 0,
        };
        let mut records = Vec::new();
        while p.remaining() > 0 {
            records.push(parse_record(&mut p, manifest.ndim)?);
        }
        if records.len() != manifest.count {
            return Err(StoreError::CountMismatch {
                declared: manifest.count,
                found: records.len(),
            });
        }
        records
    } else {
        let mut p = Cursor { buf: body, pos: 0 };
        let mut records = Vec::with_capacity(manifest.count.min(1 << 20));
        for _ in 0..manifest.count {
            records.push(parse_record(&mut p, manifest.ndim)?);
        }
        if p.remaining() < 8 {
            return Err(StoreError::Truncated);
        }
        let payload = &body[..p.pos];
        let stored = u64::from_le_bytes(body[p.pos..p.pos + 8].try_into().unwrap());
        return Err(StoreError::ChecksumMismatch {
            stored,
            computed: CRC64.checksum(payload),
        });
    };

    for pair in records.windows(2) {
        match pair[0].instance_id.cmp(&pair[1].instance_id) {
            std::cmp::Ordering::Less => {}
            std::cmp::Ordering::Equal => {
                return Err(StoreError::DuplicateId(pair[1].instance_id.clone()))
            }
            std::cmp::Ordering::Greater => {
                return Err(StoreError::Unsorted(pair[1].instance_id.clone()))
            }
        }
    }
    Ok(EmbeddingSet { manifest, records })
}

/// One joined instance: a vector per setup, in configured setup order.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub instance_id: String,
    pub vectors: Vec<Vec<f32>>,
    pub label: Veracity,
}

impl JoinedRow {
    pub fn inputs(&self) -> Vec<&[f32]> {
        self.vectors.iter().map(Vec::as_slice).collect()
    }

    /// All setup vectors laid end to end, as the baselines consume them.
    pub fn concatenated(&self) -> Vec<f32> {
        self.vectors.concat()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JoinDiagnostics {
    /// Records per input set, in setup order.
    pub input_counts: Vec<usize>,
    pub joined: usize,
    /// Distinct instance ids missing from at least one set.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedDataset {
    pub dataset: DatasetId,
    pub split: Split,
    pub setups: Vec<InputSetup>,
    pub dims: Vec<usize>,
    pub rows: Vec<JoinedRow>,
    pub diagnostics: JoinDiagnostics,
}

impl JoinedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<Veracity> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> [usize; crate::label::N_CLASSES] {
        let mut counts = [0; crate::label::N_CLASSES];
        for r in &self.rows {
            counts[r.label.index()] += 1;
        }
        counts
    }

    /// Builds a dataset directly from rows, checking dimensions and ids.
    pub fn from_rows(
        dataset: DatasetId,
        split: Split,
        setups: Vec<InputSetup>,
        dims: Vec<usize>,
        mut rows: Vec<JoinedRow>,
    ) -> Result<Self> {
        if setups.len() != dims.len() || setups.is_empty() {
            return Err(StoreError::NoSets);
        }
        rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        for pair in rows.windows(2) {
            if pair[0].instance_id == pair[1].instance_id {
                return Err(StoreError::DuplicateId(pair[1].instance_id.clone()));
            }
        }
        for r in &rows {
            if r.vectors.len() != dims.len() {
                return Err(StoreError::DimensionMismatch {
                    id: r.instance_id.clone(),
                    expected: dims.len(),
                    found: r.vectors.len(),
                });
            }
            for (v, &d) in r.vectors.iter().zip(&dims) {
                if v.len() != d {
                    return Err(StoreError::DimensionMismatch {
                        id: r.instance_id.clone(),
                        expected: d,
                        found: v.len(),
                    });
                }
            }
        }
        let n = rows.len();
        Ok(Self {
            dataset,
            split,
            diagnostics: JoinDiagnostics {
                input_counts: vec![n; setups.len()],
                joined: n,
                dropped: 0,
            },
            setups,
            dims,
            rows,
        })
    }
}

/// Inner-joins embedding sets on `instance_id`. Vector order in each row
/// follows the order of `sets`; rows come out in ascending id order.
pub fn join_setups(sets: &[EmbeddingSet]) -> Result<JoinedDataset> {
    let first = sets.first().ok_or(StoreError::NoSets)?;
    let mut setups = Vec::with_capacity(sets.len());
    for s in sets {
        if s.manifest.dataset != first.manifest.dataset {
            return Err(StoreError::MixedSets("datasets"));
        }
        if s.manifest.split != first.manifest.split {
            return Err(StoreError::MixedSets("splits"));
        }
        if setups.contains(&s.manifest.input_setup) {
            return Err(StoreError::DuplicateSetup(s.manifest.input_setup));
        }
        setups.push(s.manifest.input_setup);
        validate_records(&s.manifest, &s.records)?;
    }

    // id -> (per-set record index)
    let mut index: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
    for (si, s) in sets.iter().enumerate() {
        for (ri, r) in s.records.iter().enumerate() {
            index
                .entry(r.instance_id.as_str())
                .or_insert_with(|| vec![None; sets.len()])[si] = Some(ri);
        }
    }

    let mut rows = Vec::new();
    let mut dropped = 0;
    for (id, slots) in &index {
        let mut label: Option<Veracity> = None;
        for (si, slot) in slots.iter().enumerate() {
            if let Some(ri) = slot {
                let l = sets[si].records[*ri].label;
                match label {
                    Some(prev) if prev != l => {
                        return Err(StoreError::LabelConflict(id.to_string()))
                    }
                    _ => label = Some(l),
                }
            }
        }
        if slots.iter().all(Option::is_some) {
            rows.push(JoinedRow {
                instance_id: id.to_string(),
                vectors: slots
                    .iter()
                    .enumerate()
                    .map(|(si, ri)| sets[si].records[ri.unwrap()].vector.clone())
                    .collect(),
                label: label.unwrap(),
            });
        } else {
            dropped += 1;
        }
    }

    Ok(JoinedDataset {
        dataset: first.manifest.dataset,
        split: first.manifest.split,
        dims: sets.iter().map(|s| s.manifest.ndim).collect(),
        diagnostics: JoinDiagnostics {
            input_counts: sets.iter().map(|s| s.records.len()).collect(),
            joined: rows.len(),
            dropped,
        },
        setups,
        rows,
    })
}

/// Picks the set for each configured setup (in that order) and joins them.
pub fn join_in_order(setups: &[InputSetup], sets: &[EmbeddingSet]) -> Result<JoinedDataset> {
    let by_setup: HashMap<InputSetup, &EmbeddingSet> =
        sets.iter().map(|s| (s.manifest.input_setup, s)).collect();
    let ordered = setups
        .iter()
        .map(|s| {
            by_setup
                .get(s)
                .map(|&set| set.clone())
                .ok_or(StoreError::MissingSetup(*s))
        })
        .collect::<Result<Vec<_>>>()?;
    join_setups(&ordered)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(PRESETS.len(), 6);
        assert_eq!(
            preset("input3"),
            Some(&[InputSetup::MmClaim, InputSetup::MmImage][..])
        );
        assert_eq!(preset("input2").unwrap().len(), 4);
        assert!(preset("input5").is_none());
    }

    fn rec(id: &str, v: &[f32], label: Veracity) -> PooledEmbedding {
        PooledEmbedding {
            instance_id: id.into(),
            vector: v.to_vec(),
            label,
        }
    }

    fn set(setup: InputSetup, ndim: usize, recs: Vec<PooledEmbedding>) -> EmbeddingSet {
        EmbeddingSet {
            manifest: EmbeddingManifest::new(
                DatasetId::Mocheg,
                Split::Train,
                setup,
                "toy",
                ndim,
                recs.len(),
            ),
            records: recs,
        }
    }

    #[test]
    fn mean_pool_single_token_is_identity() {
        let out = mean_pool(&[vec![1f32, 2., 3., 4.]]).unwrap();
        assert_eq!(out, vec![1., 2., 3., 4.]);
    }

    #[test]
    fn mean_pool_two_tokens() {
        let out = mean_pool(&[[0f64, 0.], [2., 4.]]).unwrap();
        assert_eq!(out, vec![1., 2.]);
    }

    #[test]
    fn mean_pool_matches_double_loop() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, &[]);
        let m: Vec<Vec<f32>> = (0..7)
            .map(|_| (0..16).map(|_| rng.gen_range(-3f32..3.)).collect())
            .collect();
        let out = mean_pool(&m).unwrap();
        for j in 0..16 {
            let mut s = 0f64;
            for row in &m {
                s += row[j] as f64;
            }
            let expected = s / 7.0;
            assert!((out[j] as f64 - expected).abs() <= 1e-6 * expected.abs().max(1e-3));
        }
    }

    #[test]
    fn mean_pool_errors() {
        let empty: [Vec<f32>; 0] = [];
        assert!(matches!(mean_pool(&empty), Err(StoreError::EmptyTokens)));
        let bad = mean_pool(&[vec![1f32, 2.], vec![f32::NAN, 0.]]).unwrap_err();
        assert!(matches!(bad, StoreError::NonFiniteToken { row: 1, col: 0 }));
        let ragged = mean_pool(&[vec![1f32, 2.], vec![0.]]).unwrap_err();
        assert!(matches!(ragged, StoreError::RaggedTokens { row: 1, .. }));
    }

    #[test]
    fn encode_decode_round_trip() {
        let recs = vec![
            rec("a", &[1., 2., 3.], Veracity::Supported),
            rec("b", &[-0.5, 0., 1e-20], Veracity::Nei),
        ];
        let m = EmbeddingManifest::new(
            DatasetId::Factify2,
            Split::Val,
            InputSetup::Claim,
            "m",
            3,
            2,
        );
        let bytes = encode_embedding_set(&m, &recs).unwrap();
        let back = decode_embedding_set(&bytes).unwrap();
        assert_eq!(back.manifest, m);
        assert_eq!(back.records, recs);
    }

    #[test]
    fn writer_sorts_by_id() {
        let recs = vec![
            rec("z", &[1.], Veracity::Supported),
            rec("a", &[2.], Veracity::Refuted),
        ];
        let m =
            EmbeddingManifest::new(DatasetId::Mocheg, Split::Test, InputSetup::Claim, "m", 1, 2);
        let back = decode_embedding_set(&encode_embedding_set(&m, &recs).unwrap()).unwrap();
        assert_eq!(back.records[0].instance_id, "a");
        assert_eq!(back.records[1].instance_id, "z");
    }

    #[test]
    fn empty_set_is_valid() {
        let m =
            EmbeddingManifest::new(DatasetId::Mocheg, Split::Test, InputSetup::Claim, "m", 3, 0);
        let back = decode_embedding_set(&encode_embedding_set(&m, &[]).unwrap()).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back.manifest.count, 0);
    }

    #[test]
    fn write_rejects_bad_records() {
        let m =
            EmbeddingManifest::new(DatasetId::Mocheg, Split::Test, InputSetup::Claim, "m", 3, 1);
        let err =
            encode_embedding_set(&m, &[rec("a", &[1., 2., 3., 4.], Veracity::Nei)]).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
        let m2 = EmbeddingManifest {
            count: 2,
            ..m.clone()
        };
        let dup = vec![
            rec("a", &[1., 2., 3.], Veracity::Nei),
            rec("a", &[1., 2., 3.], Veracity::Nei),
        ];
        assert!(matches!(
            encode_embedding_set(&m2, &dup),
            Err(StoreError::DuplicateId(_))
        ));
        assert!(matches!(
            encode_embedding_set(&m2, &dup[..1]),
            Err(StoreError::CountMismatch { .. })
        ));
    }

    #[test]
    fn decode_detects_damage() {
        let recs = vec![
            rec("a", &[1., 2.], Veracity::Supported),
            rec("b", &[3., 4.], Veracity::Refuted),
        ];
        let m = EmbeddingManifest::new(
            DatasetId::Mocheg,
            Split::Train,
            InputSetup::MmClaim,
            "m",
            2,
            2,
        );
        let bytes = encode_embedding_set(&m, &recs).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_embedding_set(&bad_magic),
            Err(StoreError::BadMagic)
        ));

        for cut in [1, 5, 9, 12, 20] {
            let t = &bytes[..bytes.len() - cut];
            let err = decode_embedding_set(t).unwrap_err();
            assert_eq!(err.to_string(), "truncated payload", "cut {cut}");
        }

        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 10] ^= 0x40;
        assert!(matches!(
            decode_embedding_set(&flipped),
            Err(StoreError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn join_full_overlap() {
        let a = set(
            InputSetup::MmClaim,
            1,
            vec![
                rec("a", &[1.], Veracity::Supported),
                rec("b", &[2.], Veracity::Nei),
            ],
        );
        let b = set(
            InputSetup::MmEvidence,
            2,
            vec![
                rec("b", &[3., 3.], Veracity::Nei),
                rec("a", &[4., 4.], Veracity::Supported),
            ],
        );
        let j = join_setups(&[a, b]).unwrap();
        assert_eq!(j.len(), 2);
        assert_eq!(j.rows[0].instance_id, "a");
        assert_eq!(j.rows[0].vectors, vec![vec![1.], vec![4., 4.]]);
        assert_eq!(j.dims, vec![1, 2]);
        assert_eq!(j.diagnostics.dropped, 0);
    }

    #[test]
    fn join_partial_overlap_drops() {
        let a = set(
            InputSetup::MmClaim,
            1,
            vec![
                rec("a", &[1.], Veracity::Supported),
                rec("b", &[2.], Veracity::Nei),
            ],
        );
        let b = set(
            InputSetup::MmImage,
            1,
            vec![
                rec("b", &[3.], Veracity::Nei),
                rec("c", &[4.], Veracity::Refuted),
            ],
        );
        let j = join_setups(&[a, b]).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j.rows[0].instance_id, "b");
        assert_eq!(j.diagnostics.dropped, 2);
    }

    #[test]
    fn join_label_conflict() {
        let a = set(
            InputSetup::MmClaim,
            1,
            vec![rec("b", &[1.], Veracity::Supported)],
        );
        let b = set(
            InputSetup::MmImage,
            1,
            vec![rec("b", &[3.], Veracity::Refuted)],
        );
        let err = join_setups(&[a, b]).unwrap_err();
        assert_eq!(err.to_string(), "label conflict: b");
    }

    #[test]
    fn join_rejects_mixed_and_duplicate() {
        let a = set(InputSetup::MmClaim, 1, vec![]);
        let mut b = set(InputSetup::MmImage, 1, vec![]);
        b.manifest.split = Split::Test;
        assert!(matches!(
            join_setups(&[a.clone(), b]),
            Err(StoreError::MixedSets(_))
        ));
        assert!(matches!(
            join_setups(&[a.clone(), a]),
            Err(StoreError::DuplicateSetup(_))
        ));
    }

    #[test]
    fn join_in_order_follows_configuration() {
        let a = set(
            InputSetup::MmClaim,
            1,
            vec![rec("a", &[1.], Veracity::Supported)],
        );
        let b = set(
            InputSetup::MmImage,
            1,
            vec![rec("a", &[2.], Veracity::Supported)],
        );
        let j =
            join_in_order(&[InputSetup::MmImage, InputSetup::MmClaim], &[a.clone(), b]).unwrap();
        assert_eq!(j.setups, vec![InputSetup::MmImage, InputSetup::MmClaim]);
        assert_eq!(j.rows[0].vectors, vec![vec![2.], vec![1.]]);
        assert!(matches!(
            join_in_order(&[InputSetup::Claim], &[a]),
            Err(StoreError::MissingSetup(InputSetup::Claim))
        ));
    }

    #[test]
    fn setup_keys_parse() {
        for s in InputSetup::ALL {
            assert_eq!(s.key().parse::<InputSetup>().unwrap(), s);
            assert_eq!(s.to_string(), s.key());
        }
        assert!("bogus".parse::<InputSetup>().is_err());
    }
}
