//! Gaussian-cluster embeddings for fixtures, tests and benchmarks.
//!
//! Each class has one random centre per input setup; instances are the centre
//! plus isotropic noise. Centres depend only on the seed, so train, val and
//! test splits drawn from one `ClusterSpec` share them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding_store::{
    DatasetId, EmbeddingManifest, EmbeddingSet, InputSetup, JoinedDataset, JoinedRow,
    PooledEmbedding, Split,
};
use crate::label::{Veracity, N_CLASSES};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub dataset: DatasetId,
    pub setups: Vec<InputSetup>,
    pub dims: Vec<usize>,
    /// Scale of the centre coordinates.
    pub separation: f64,
    /// Standard deviation of the per-coordinate noise.
    pub noise: f64,
    /// Relative class frequencies.
    pub class_ratio: [f64; N_CLASSES],
    pub seed: u64,
}

impl ClusterSpec {
    /// Balanced classes, unit noise, centre scale 1.
    pub fn new(setups: Vec<InputSetup>, dims: Vec<usize>, seed: u64) -> Self {
        assert_eq!(setups.len(), dims.len(), "one dim per setup");
        Self {
            dataset: DatasetId::Mocheg,
            setups,
            dims,
            separation: 1.0,
            noise: 1.0,
            class_ratio: [1.0; N_CLASSES],
            seed,
        }
    }

    fn centres(&self) -> Vec<Vec<Vec<f64>>> {
        let mut r = rng::stream(self.seed, &[rng::tag::SYNTH, u64::MAX]);
        (0..N_CLASSES)
            .map(|_| {
                self.dims
                    .iter()
                    .map(|&d| {
                        (0..d)
                            .map(|_| self.separation * r.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Class counts for `n` items under `ratio`, by largest remainder.
pub fn class_counts(ratio: &[f64; N_CLASSES], n: usize) -> [usize; N_CLASSES] {
    let total: f64 = ratio.iter().sum();
    let exact = ratio.map(|r| r / total * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut order: Vec<usize> = (0..N_CLASSES).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

/// Draws `n` labelled rows for one split. Ids are `{split}-{index:06}`.
pub fn sample_split(spec: &ClusterSpec, split: Split, n: usize) -> JoinedDataset {
    let centres = spec.centres();
    let mut r = rng::stream(spec.seed, &[rng::tag::SYNTH, split as u64]);
    let counts = class_counts(&spec.class_ratio, n);
    let mut labels: Vec<Veracity> = Veracity::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, counts[c.index()]))
        .collect();
    labels.shuffle(&mut r);
    let rows = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| JoinedRow {
            instance_id: format!("{split}-{i:06}"),
            vectors: centres[label.index()]
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|&m| (m + spec.noise * r.sample::<f64, _>(StandardNormal)) as f32)
                        .collect()
                })
                .collect(),
            label,
        })
        .collect();
    JoinedDataset::from_rows(
        spec.dataset,
        split,
        spec.setups.clone(),
        spec.dims.clone(),
        rows,
    )
    .expect("generated rows are consistent")
}

/// Splits a joined dataset back into one embedding set per setup.
pub fn to_embedding_sets(data: &JoinedDataset, source_model: &str) -> Vec<EmbeddingSet> {
    data.setups
        .iter()
        .zip(&data.dims)
        .enumerate()
        .map(|(k, (&setup, &ndim))| EmbeddingSet {
            manifest: EmbeddingManifest::new(
                data.dataset,
                data.split,
                setup,
                source_model,
                ndim,
                data.len(),
            ),
            records: data
                .rows
                .iter()
                .map(|r| PooledEmbedding {
                    instance_id: r.instance_id.clone(),
                    vector: r.vectors[k].clone(),
                    label: r.label,
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_ratio() {
        assert_eq!(class_counts(&[1.0, 1.0, 1.0], 10), [4, 3, 3]);
        assert_eq!(class_counts(&[10.0, 1.0, 1.0], 120), [100, 10, 10]);
        assert_eq!(class_counts(&[1.0, 0.0, 1.0], 3), [2, 0, 1]);
    }

    #[test]
    fn splits_share_centres_and_are_seeded() {
        let spec = ClusterSpec::new(
            vec![InputSetup::Claim, InputSetup::ClaimImage],
            vec![3, 5],
            9,
        );
        let a = sample_split(&spec, Split::Train, 30);
        let b = sample_split(&spec, Split::Train, 30);
        assert_eq!(a, b);
        assert_eq!(a.dims, vec![3, 5]);
        assert_eq!(a.class_counts(), [10, 10, 10]);
        let v = sample_split(&spec, Split::Val, 30);
        assert_ne!(a.rows[0].vectors, v.rows[0].vectors);
        let sets = to_embedding_sets(&a, "synthetic");
        assert_eq!(sets.len(), 2);
        assert_eq!(crate::join_setups(&sets).unwrap().rows, a.rows);
    }
}
