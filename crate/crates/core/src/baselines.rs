//! KNN and one-vs-rest linear SVM over concatenated setup vectors.
//!
//! Both consume the same joined embeddings as the probe, concatenated in
//! setup order, without standardization.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_store::JoinedDataset;
use crate::label::{Veracity, N_CLASSES};
use crate::{par, rng};

pub const DEFAULT_K: usize = 7;
pub const DEFAULT_SVM_LAMBDA: f64 = 1e-3;
pub const DEFAULT_SVM_EPOCHS: usize = 100;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("no training rows")]
    Empty,
    #[error("k = {k} must be in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector has similarity 0 to everything.
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric: {other}")),
        }
    }
}

impl Metric {
    pub fn distance(self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (&x, &y) in a.iter().zip(b) {
                    let (x, y) = (x as f64, y as f64);
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }
}

fn check_rows(rows: &[Vec<f32>], labels: &[Veracity]) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(BaselineError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let dim = rows.first().ok_or(BaselineError::Empty)?.len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(BaselineError::DimMismatch {
            expected: dim,
            found: r.len(),
        });
    }
    Ok(dim)
}

/// Concatenated feature rows and labels of a joined dataset.
pub fn flatten(data: &JoinedDataset) -> (Vec<Vec<f32>>, Vec<Veracity>) {
    data.rows
        .iter()
        .map(|r| (r.concatenated(), r.label))
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    rows: Vec<Vec<f32>>,
    labels: Vec<Veracity>,
    dim: usize,
    pub k: usize,
    pub metric: Metric,
}

impl KnnModel {
    pub fn new(
        rows: Vec<Vec<f32>>,
        labels: Vec<Veracity>,
        k: usize,
        metric: Metric,
    ) -> Result<Self> {
        let dim = check_rows(&rows, &labels)?;
        if k == 0 || k > rows.len() {
            return Err(BaselineError::InvalidK { k, n: rows.len() });
        }
        Ok(Self {
            rows,
            labels,
            dim,
            k,
            metric,
        })
    }

    pub fn fit(data: &JoinedDataset, k: usize, metric: Metric) -> Result<Self> {
        let (rows, labels) = flatten(data);
        Self::new(rows, labels, k, metric)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Majority label among the k nearest rows.
///
/// Neighbours are ordered by (distance, row index). Vote ties go to the class
/// with the smaller summed neighbour distance, then to the lower class index.
pub fn knn_predict(model: &KnnModel, query: &[f32]) -> Result<Veracity> {
    if query.len() != model.dim {
        return Err(BaselineError::DimMismatch {
            expected: model.dim,
            found: query.len(),
        });
    }
    let mut dists: Vec<(f64, usize)> = model
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (model.metric.distance(r, query), i))
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if model.k < dists.len() {
        dists.select_nth_unstable_by(model.k - 1, by_key);
        dists.truncate(model.k);
    }

    let mut votes = [0usize; N_CLASSES];
    let mut dist_sum = [0f64; N_CLASSES];
    for &(d, i) in &dists {
        let c = model.labels[i].index();
        votes[c] += 1;
        dist_sum[c] += d;
    }
    let best = (0..N_CLASSES)
        .filter(|&c| votes[c] > 0)
        .min_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(dist_sum[a].total_cmp(&dist_sum[b]))
                .then(a.cmp(&b))
        })
        .expect("k >= 1");
    Ok(Veracity::from_index(best).unwrap())
}

pub fn knn_predict_batch(model: &KnnModel, queries: &[Vec<f32>]) -> Result<Vec<Veracity>> {
    par::map(queries, |_, q| knn_predict(model, q))
        .into_iter()
        .collect()
}

/// One-vs-rest linear SVM. Each class has a weight vector and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, query: &[f32]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| b + w.iter().zip(query).map(|(w, &x)| w * x as f64).sum::<f64>())
            .collect()
    }
}

/// Pegasos on one binary problem. The bias is learned as the weight of a
/// constant-1 feature. Returns the average of the iterates over the final
/// epoch.
fn pegasos(
    rows: &[Vec<f32>],
    targets: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
    class: usize,
) -> (Vec<f64>, f64) {
    let dim = rows[0].len();
    let n = rows.len();
    let mut w = vec![0f64; dim + 1];
    let mut avg = vec![0f64; dim + 1];
    let radius_sq = 1.0 / lambda;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for epoch in 0..epochs {
        let mut r = rng::stream(seed, &[rng::tag::SVM, class as u64, epoch as u64]);
        order.shuffle(&mut r);
        let last = epoch + 1 == epochs;
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &rows[i];
            let y = targets[i];
            let margin = y
                * (w[dim]
                    + w[..dim]
                        .iter()
                        .zip(x)
                        .map(|(w, &v)| w * v as f64)
                        .sum::<f64>());
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wv, &xv) in w[..dim].iter_mut().zip(x) {
                    *wv += eta * y * xv as f64;
                }
                w[dim] += eta * y;
            }
            let norm_sq: f64 = w.iter().map(|v| v * v).sum();
            if norm_sq > radius_sq {
                let s = (radius_sq / norm_sq).sqrt();
                w.iter_mut().for_each(|v| *v *= s);
            }
            if last {
                avg.iter_mut().zip(&w).for_each(|(a, v)| *a += v);
            }
        }
    }
    avg.iter_mut().for_each(|a| *a /= n as f64);
    let bias = avg.pop().unwrap();
    (avg, bias)
}

/// Trains three one-vs-rest hinge-loss classifiers by seeded stochastic
/// subgradient descent on `lambda/2 |w|^2 + mean hinge`.
pub fn svm_train(
    rows: &[Vec<f32>],
    labels: &[Veracity],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel> {
    check_rows(rows, labels)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BaselineError::InvalidLambda(lambda));
    }
    let classes: Vec<usize> = (0..N_CLASSES).collect();
    let fitted = par::map(&classes, |_, &c| {
        let targets: Vec<f64> = labels
            .iter()
            .map(|l| if l.index() == c { 1.0 } else { -1.0 })
            .collect();
        pegasos(rows, &targets, lambda, epochs.max(1), seed, c)
    });
    let (weights, biases) = fitted.into_iter().unzip();
    Ok(LinearSvmModel {
        weights,
        biases,
        lambda,
        epochs,
        seed,
    })
}

pub fn svm_fit(
    data: &JoinedDataset,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel> {
    let (rows, labels) = flatten(data);
    svm_train(&rows, &labels, lambda, epochs, seed)
}

pub fn svm_predict(model: &LinearSvmModel, query: &[f32]) -> Result<Veracity> {
    if query.len() != model.dim() {
        return Err(BaselineError::DimMismatch {
            expected: model.dim(),
            found: query.len(),
        });
    }
    let scores = model.scores(query);
    Ok(Veracity::from_index(crate::probe_model::argmax(&scores)).unwrap())
}

pub fn svm_predict_batch(model: &LinearSvmModel, queries: &[Vec<f32>]) -> Result<Vec<Veracity>> {
    par::map(queries, |_, q| svm_predict(model, q))
        .into_iter()
        .collect()
}

/// Sum over classes of `lambda/2 |w_c|^2 + mean hinge` (bias included in the
/// norm, as trained).
pub fn svm_objective(model: &LinearSvmModel, rows: &[Vec<f32>], labels: &[Veracity]) -> f64 {
    (0..model.weights.len())
        .map(|c| {
            let w = &model.weights[c];
            let b = model.biases[c];
            let norm_sq = w.iter().map(|v| v * v).sum::<f64>() + b * b;
            let hinge = rows
                .iter()
                .zip(labels)
                .map(|(x, l)| {
                    let y = if l.index() == c { 1.0 } else { -1.0 };
                    let s = b + w.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>();
                    (1.0 - y * s).max(0.0)
                })
                .sum::<f64>()
                / rows.len() as f64;
            model.lambda / 2.0 * norm_sq + hinge
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_exact_match_k1() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let labels = vec![Veracity::Supported, Veracity::Nei, Veracity::Refuted];
        let m = KnnModel::new(rows, labels, 1, Metric::Euclidean).unwrap();
        assert_eq!(knn_predict(&m, &[1.0, 1.0]).unwrap(), Veracity::Nei);
    }

    #[test]
    fn knn_small_example() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]];
        let labels = vec![Veracity::Supported, Veracity::Supported, Veracity::Refuted];
        let m = KnnModel::new(rows, labels, 3, Metric::Euclidean).unwrap();
        assert_eq!(knn_predict(&m, &[0.0, 0.4]).unwrap(), Veracity::Supported);
    }

    #[test]
    fn knn_full_k_is_global_majority() {
        let rows: Vec<Vec<f32>> = (0..9).map(|i| vec![i as f32]).collect();
        let labels: Vec<Veracity> = [0, 2, 2, 1, 2, 0, 2, 1, 0]
            .iter()
            .map(|&c| Veracity::from_index(c).unwrap())
            .collect();
        let m = KnnModel::new(rows, labels, 9, Metric::Euclidean).unwrap();
        assert_eq!(knn_predict(&m, &[-100.0]).unwrap(), Veracity::Nei);
    }

    #[test]
    fn knn_vote_tie_uses_distance_sum() {
        // two votes each for classes 0 and 1; class 1 neighbours are closer
        let rows = vec![vec![3.0], vec![4.0], vec![1.0], vec![2.0]];
        let labels = vec![
            Veracity::Supported,
            Veracity::Supported,
            Veracity::Refuted,
            Veracity::Refuted,
        ];
        let m = KnnModel::new(rows, labels, 4, Metric::Euclidean).unwrap();
        assert_eq!(knn_predict(&m, &[0.0]).unwrap(), Veracity::Refuted);
    }

    #[test]
    fn knn_errors() {
        let rows = vec![vec![0.0, 0.0]];
        let labels = vec![Veracity::Supported];
        assert!(matches!(
            KnnModel::new(rows.clone(), labels.clone(), 2, Metric::Euclidean),
            Err(BaselineError::InvalidK { .. })
        ));
        let m = KnnModel::new(rows, labels, 1, Metric::Cosine).unwrap();
        assert!(matches!(
            knn_predict(&m, &[1.0]),
            Err(BaselineError::DimMismatch { .. })
        ));
    }

    #[test]
    fn cosine_distance() {
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[2.0, 0.0])).abs() < 1e-15);
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[0.0, 3.0]), 1.0);
    }

    fn toy_two_class() -> (Vec<Vec<f32>>, Vec<Veracity>) {
        let pos = [[2.0, 2.5], [3.0, 1.5], [2.5, 3.0], [4.0, 2.0]];
        let neg = [[-1.0, -0.5], [-2.0, 0.5], [0.0, -2.0], [-1.5, -1.5]];
        let rows = pos.iter().chain(&neg).map(|p| p.to_vec()).collect();
        let labels = (0..8)
            .map(|i| {
                if i < 4 {
                    Veracity::Supported
                } else {
                    Veracity::Refuted
                }
            })
            .collect();
        (rows, labels)
    }

    #[test]
    fn svm_separates_toy_set() {
        let (rows, labels) = toy_two_class();
        let m = svm_train(&rows, &labels, 1e-3, 100, 42).unwrap();
        let preds = svm_predict_batch(&m, &rows).unwrap();
        assert_eq!(preds, labels);
    }

    #[test]
    fn svm_single_class() {
        let rows = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]];
        let labels = vec![Veracity::Nei; 3];
        let m = svm_train(&rows, &labels, 1e-2, 50, 1).unwrap();
        for q in [[5.0, 5.0], [-3.0, 1.0], [0.0, 0.0]] {
            assert_eq!(svm_predict(&m, &q).unwrap(), Veracity::Nei);
        }
    }

    #[test]
    fn svm_is_seeded() {
        let (rows, labels) = toy_two_class();
        let a = svm_train(&rows, &labels, 1e-3, 20, 7).unwrap();
        let b = svm_train(&rows, &labels, 1e-3, 20, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn svm_zero_and_one_hot_weights() {
        let mut m = LinearSvmModel {
            weights: vec![vec![0.0; 2]; 3],
            biases: vec![0.0; 3],
            lambda: 1.0,
            epochs: 0,
            seed: 0,
        };
        assert_eq!(svm_predict(&m, &[1.0, -1.0]).unwrap(), Veracity::Supported);
        m.weights[2] = vec![1.0, 0.0];
        assert_eq!(svm_predict(&m, &[1.0, -1.0]).unwrap(), Veracity::Nei);
        assert!(matches!(
            svm_predict(&m, &[1.0]),
            Err(BaselineError::DimMismatch { .. })
        ));
    }
}
