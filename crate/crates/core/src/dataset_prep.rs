//! Dataset conventions applied to normalized instance metadata.
//!
//! Metadata arrives as UTF-8 JSON lines, one object per instance:
//! `{id, claim, evidence, claim_image, evidence_images, raw_label, dataset, split}`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_store::{DatasetId, InputSetup, Split};
use crate::label::{Veracity, N_CLASSES};
use crate::rng;

/// Prompt sent to text-only and vision-language models for zero-shot runs.
pub const PROMPT_TEMPLATE: &str = include_str!("../resources/prompt_template.txt");

/// Longest evidence text, in words, handed to a model.
pub const MAX_EVIDENCE_WORDS: usize = 768;

/// Share of the training split held out for validation.
pub const VAL_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("unknown label {label:?} for dataset {dataset}")]
    UnknownLabel { dataset: DatasetId, label: String },
    #[error("split fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("class {0:?} has no instances")]
    EmptyClass(Veracity),
    #[error("{path}:{line}: {message}")]
    Metadata {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PrepError>;

/// One line of the normalized metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub id: String,
    pub claim: String,
    #[serde(default)]
    pub evidence: String,
    #[serde(default)]
    pub claim_image: Option<String>,
    #[serde(default)]
    pub evidence_images: Vec<String>,
    pub raw_label: String,
    pub dataset: DatasetId,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimInstance {
    pub instance_id: String,
    pub claim_text: String,
    pub evidence_text: String,
    pub claim_image_ref: Option<String>,
    pub evidence_image_refs: Vec<String>,
    pub raw_label: String,
    pub label: Veracity,
}

impl ClaimInstance {
    pub fn from_record(rec: MetadataRecord) -> Result<Self> {
        let label = remap_label(rec.dataset, &rec.raw_label)?;
        Ok(Self {
            instance_id: rec.id,
            claim_text: rec.claim,
            evidence_text: rec.evidence,
            claim_image_ref: rec.claim_image,
            evidence_image_refs: rec.evidence_images,
            raw_label: rec.raw_label,
            label,
        })
    }

    pub fn evidence_image(&self) -> Option<&str> {
        select_first_image(&self.evidence_image_refs)
    }
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<Vec<MetadataRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| PrepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PrepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| PrepError::Metadata {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Collapses the five Factify2 labels onto the three veracity classes.
pub fn remap_factify2_label(raw: &str) -> Result<Veracity> {
    match raw {
        "Support_Multimodal" | "Support_Text" => Ok(Veracity::Supported),
        "Refute" => Ok(Veracity::Refuted),
        "Insufficient_Multimodal" | "Insufficient_Text" => Ok(Veracity::Nei),
        other => Err(PrepError::UnknownLabel {
            dataset: DatasetId::Factify2,
            label: other.to_owned(),
        }),
    }
}

/// Mocheg labels are already three-way and are used as given.
pub fn remap_mocheg_label(raw: &str) -> Result<Veracity> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "supported" => Ok(Veracity::Supported),
        "refuted" => Ok(Veracity::Refuted),
        "nei" | "not enough info" => Ok(Veracity::Nei),
        _ => Err(PrepError::UnknownLabel {
            dataset: DatasetId::Mocheg,
            label: raw.to_owned(),
        }),
    }
}

pub fn remap_label(dataset: DatasetId, raw: &str) -> Result<Veracity> {
    match dataset {
        DatasetId::Mocheg => remap_mocheg_label(raw),
        DatasetId::Factify2 => remap_factify2_label(raw),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Per-class validation counts: half-up rounding, at least one for classes
/// with ten or more members, then a residual correction so the total equals
/// the rounded overall share. Each unit of residual goes to the class whose
/// count is furthest from its exact share in the needed direction (largest
/// class first on ties), which keeps every class within one instance of
/// `fraction * count`.
pub fn stratified_val_counts(class_counts: &[usize], fraction: f64) -> Vec<usize> {
    let floor_of = |n: usize| usize::from(n >= 10);
    let mut val: Vec<usize> = class_counts
        .iter()
        .map(|&n| round_half_up(fraction * n as f64).max(floor_of(n)).min(n))
        .collect();
    let total: usize = class_counts.iter().sum();
    let target = round_half_up(fraction * total as f64);
    loop {
        let current: usize = val.iter().sum();
        if current == target {
            break;
        }
        let grow = current < target;
        // gap > 0 means the class is below its exact share
        let gap = |k: usize| fraction * class_counts[k] as f64 - val[k] as f64;
        let candidate = (0..class_counts.len())
            .filter(|&k| {
                if grow {
                    val[k] < class_counts[k]
                } else {
                    val[k] > floor_of(class_counts[k])
                }
            })
            .max_by(|&a, &b| {
                let (ga, gb) = if grow {
                    (gap(a), gap(b))
                } else {
                    (-gap(a), -gap(b))
                };
                ga.total_cmp(&gb)
                    .then(class_counts[a].cmp(&class_counts[b]))
                    .then(b.cmp(&a))
            });
        match candidate {
            Some(k) if grow => val[k] += 1,
            Some(k) => val[k] -= 1,
            None => break,
        }
    }
    val
}

/// Seeded, class-stratified hold-out. Indices in each part are ascending.
pub fn stratified_split(labels: &[Veracity], fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PrepError::BadFraction(fraction));
    }
    let mut members: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        members[l.index()].push(i);
    }
    if let Some(c) = Veracity::ALL.iter().find(|c| members[c.index()].is_empty()) {
        return Err(PrepError::EmptyClass(*c));
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let val_counts = stratified_val_counts(&counts, fraction);

    let mut in_val = vec![false; labels.len()];
    for (class, (ids, &k)) in members.iter().zip(&val_counts).enumerate() {
        let mut r = rng::stream(seed, &[rng::tag::SPLIT, class as u64]);
        for pick in index::sample(&mut r, ids.len(), k) {
            in_val[ids[pick]] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| in_val[i]);
    Ok(SplitIndices { train, val })
}

/// Splits items by their label; convenience over [`stratified_split`].
pub fn stratified_split_items<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> Veracity,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let labels: Vec<Veracity> = items.iter().map(label_of).collect();
    let idx = stratified_split(&labels, fraction, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&idx.train), pick(&idx.val)))
}

/// Keeps the first `max_words` whitespace-delimited words.
pub fn crop_evidence(text: &str, max_words: usize) -> String {
    let mut words = text.split_whitespace();
    let head: Vec<&str> = words.by_ref().take(max_words).collect();
    if words.next().is_none() {
        text.to_owned()
    } else {
        head.join(" ")
    }
}

pub fn select_first_image<S: AsRef<str>>(refs: &[S]) -> Option<&str> {
    refs.first().map(AsRef::as_ref)
}

/// Which fields an instance must carry to be usable for a set of setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requirements {
    pub claim_image: bool,
    pub evidence_image: bool,
}

impl Requirements {
    pub const ALL: Requirements = Requirements {
        claim_image: true,
        evidence_image: true,
    };

    pub fn for_setups(setups: &[InputSetup]) -> Self {
        let mut req = Requirements {
            claim_image: false,
            evidence_image: false,
        };
        for s in setups {
            match s {
                InputSetup::MmClaim | InputSetup::ClaimImage | InputSetup::MmImage => {
                    req.claim_image = true
                }
                InputSetup::MmEvidence | InputSetup::EvidenceImage => req.evidence_image = true,
                InputSetup::MmText | InputSetup::Claim | InputSetup::EvidenceText => {}
            }
        }
        req
    }

    pub fn satisfied_by(&self, inst: &ClaimInstance) -> bool {
        !inst.evidence_text.trim().is_empty()
            && (!self.claim_image
                || inst
                    .claim_image_ref
                    .as_deref()
                    .is_some_and(|s| !s.is_empty()))
            && (!self.evidence_image || inst.evidence_image().is_some_and(|s| !s.is_empty()))
    }
}

/// Drops instances missing evidence text or a required image.
pub fn filter_complete(
    instances: Vec<ClaimInstance>,
    req: &Requirements,
) -> (Vec<ClaimInstance>, usize) {
    let before = instances.len();
    let kept: Vec<ClaimInstance> = instances
        .into_iter()
        .filter(|i| req.satisfied_by(i))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

pub fn render_prompt(claim: &str, evidence: &str) -> String {
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + claim.len() + evidence.len());
    let (head, rest) = PROMPT_TEMPLATE
        .split_once("{claim}")
        .expect("template has a claim slot");
    let (mid, tail) = rest
        .split_once("{evidence}")
        .expect("template has an evidence slot");
    out.push_str(head);
    out.push_str(claim);
    out.push_str(mid);
    out.push_str(evidence);
    out.push_str(tail);
    out
}

const VERDICT_KEYWORDS: [(&str, Veracity); 3] = [
    ("not enough info", Veracity::Nei),
    ("supported", Veracity::Supported),
    ("refuted", Veracity::Refuted),
];

/// Earliest case-insensitive verdict keyword in a model response.
pub fn parse_verdict(response: &str) -> Option<Veracity> {
    let lower = response.to_lowercase();
    VERDICT_KEYWORDS
        .iter()
        .filter_map(|&(kw, v)| lower.find(kw).map(|pos| (pos, v)))
        // stable min keeps keyword-list order at equal positions
        .min_by_key(|&(pos, _)| pos)
        .map(|(_, v)| v)
}

/// Parsed-vs-total counts for zero-shot responses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerdictTally {
    pub total: usize,
    pub parsed: usize,
    pub per_class: [usize; N_CLASSES],
}

impl VerdictTally {
    pub fn record(&mut self, verdict: Option<Veracity>) {
        self.total += 1;
        if let Some(v) = verdict {
            self.parsed += 1;
            self.per_class[v.index()] += 1;
        }
    }

    /// `parsed (percent%)` with one decimal, e.g. `1617 (97.7%)`.
    pub fn frequency_summary(&self) -> String {
        let pct = if self.total == 0 {
            0.0
        } else {
            100.0 * self.parsed as f64 / self.total as f64
        };
        format!("{} ({:.1}%)", self.parsed, pct)
    }
}

impl FromIterator<Option<Veracity>> for VerdictTally {
    fn from_iter<I: IntoIterator<Item = Option<Veracity>>>(iter: I) -> Self {
        let mut t = VerdictTally::default();
        iter.into_iter().for_each(|v| t.record(v));
        t
    }
}
