//! Loading embedding files into joined train/val/test splits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use factprobe::dataset_prep::{stratified_split, VAL_FRACTION};
use factprobe::embedding_store::{self, EmbeddingSet, JoinDiagnostics};
use factprobe::{DatasetId, InputSetup, JoinedDataset, Split};
use serde::Serialize;

use crate::fail::{missing_file, schema};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub split: Split,
    pub input_setup: InputSetup,
    pub source_model: String,
    pub ndim: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValSource {
    Files,
    /// Held out from the train files by a seeded stratified split.
    Carved,
}

pub struct Loaded {
    pub files: Vec<FileEntry>,
    pub splits: BTreeMap<Split, JoinedDataset>,
}

impl Loaded {
    pub fn source_model(&self) -> String {
        let mut models: Vec<&str> = self.files.iter().map(|f| f.source_model.as_str()).collect();
        models.sort_unstable();
        models.dedup();
        models.join("+")
    }

    pub fn get(&self, split: Split) -> Result<&JoinedDataset> {
        self.splits
            .get(&split)
            .ok_or_else(|| schema(format!("no {split} embeddings given")))
    }

    pub fn diagnostics(&self) -> BTreeMap<Split, &JoinDiagnostics> {
        self.splits
            .iter()
            .map(|(s, d)| (*s, &d.diagnostics))
            .collect()
    }

    /// Ensures a validation split exists, carving one from train if needed.
    pub fn ensure_val(&mut self, seed: u64) -> Result<ValSource> {
        if self.splits.contains_key(&Split::Val) {
            return Ok(ValSource::Files);
        }
        let train = self.get(Split::Train)?;
        let idx = stratified_split(&train.labels(), VAL_FRACTION, seed)
            .context("cannot hold out a validation split")?;
        let part = |ix: &[usize], split: Split| {
            JoinedDataset::from_rows(
                train.dataset,
                split,
                train.setups.clone(),
                train.dims.clone(),
                ix.iter().map(|&i| train.rows[i].clone()).collect(),
            )
        };
        let new_train = part(&idx.train, Split::Train)?;
        let val = part(&idx.val, Split::Val)?;
        self.splits.insert(Split::Train, new_train);
        self.splits.insert(Split::Val, val);
        Ok(ValSource::Carved)
    }
}

pub fn read_set(path: &Path) -> Result<EmbeddingSet> {
    if !path.exists() {
        return Err(missing_file(path));
    }
    embedding_store::read_embedding_set(path).with_context(|| format!("reading {}", path.display()))
}

/// Reads every file, checks it belongs to `dataset`, and joins each split in
/// `setups` order.
pub fn load(paths: &[PathBuf], dataset: DatasetId, setups: &[InputSetup]) -> Result<Loaded> {
    let mut by_split: BTreeMap<Split, Vec<EmbeddingSet>> = BTreeMap::new();
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        let set = read_set(path)?;
        let m = &set.manifest;
        if m.dataset != dataset {
            return Err(schema(format!(
                "{}: dataset is {}, expected {dataset}",
                path.display(),
                m.dataset
            )));
        }
        if !setups.contains(&m.input_setup) {
            return Err(schema(format!(
                "{}: setup {} is not part of the requested inputs",
                path.display(),
                m.input_setup
            )));
        }
        let group = by_split.entry(m.split).or_default();
        if group
            .iter()
            .any(|s| s.manifest.input_setup == m.input_setup)
        {
            return Err(schema(format!(
                "more than one {} file for setup {}",
                m.split, m.input_setup
            )));
        }
        files.push(FileEntry {
            path: path.clone(),
            split: m.split,
            input_setup: m.input_setup,
            source_model: m.source_model.clone(),
            ndim: m.ndim,
            count: m.count,
        });
        group.push(set);
    }
    let mut splits = BTreeMap::new();
    for (split, sets) in by_split {
        let joined = embedding_store::join_in_order(setups, &sets)
            .map_err(|e| schema(format!("{split} split: {e}")))?;
        splits.insert(split, joined);
    }
    let dims: Vec<&Vec<usize>> = splits.values().map(|d| &d.dims).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(schema("embedding dimensions differ between splits"));
    }
    Ok(Loaded { files, splits })
}
