#![allow(dead_code)]

use factprobe::baselines::Metric;
use factprobe::label::{Veracity, N_CLASSES};
use factprobe::probe_model::{self, Mode, ProbeConfig, ProbeParams};
use factprobe::rng;
use factprobe::trainer::weighted_cross_entropy;
use rand::Rng;

pub type Sample = (Vec<Vec<f64>>, usize);

pub fn random_samples(cfg: &ProbeConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut r = rng::stream(seed, &[77]);
    (0..n)
        .map(|_| {
            let xs = cfg
                .input_dims
                .iter()
                .map(|&d| (0..d).map(|_| r.gen_range(-2.0..2.0)).collect())
                .collect();
            (xs, r.gen_range(0..N_CLASSES))
        })
        .collect()
}

/// Weighted mean CE over the samples. Each sample's dropout mask comes from a
/// fixed stream, so repeated calls see the same masks.
pub fn loss(params: &ProbeParams, samples: &[Sample], weights: &[f64], dropout: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (xs, y)) in samples.iter().enumerate() {
        let row: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let mut r = rng::stream(5, &[i as u64]);
        let (logits, _) =
            probe_model::forward(params, &row, Mode::Train { dropout }, &mut r).unwrap();
        num += weighted_cross_entropy(&logits, *y, weights).0;
        den += weights[*y];
    }
    num / den
}

pub fn analytic_grad(
    params: &ProbeParams,
    samples: &[Sample],
    weights: &[f64],
    dropout: f64,
) -> ProbeParams {
    let mut g = params.zeros_like();
    let mut den = 0.0;
    for (i, (xs, y)) in samples.iter().enumerate() {
        let row: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let mut r = rng::stream(5, &[i as u64]);
        let (logits, cache) =
            probe_model::forward(params, &row, Mode::Train { dropout }, &mut r).unwrap();
        let (_, up) = weighted_cross_entropy(&logits, *y, weights);
        probe_model::accumulate_backward(params, &cache, &up, &mut g).unwrap();
        den += weights[*y];
    }
    g.scale(1.0 / den);
    g
}

/// Worst per-tensor relative error `|a - n| / max(|a|, |n|)` (Euclidean
/// norms) between analytic and central-difference gradients.
pub fn gradient_check(cfg: &ProbeConfig, n_samples: usize, step: f64) -> f64 {
    let mut params = probe_model::init_probe(cfg).unwrap();
    // train-like magnitudes: nudge away from the init distribution
    let mut r = rng::stream(cfg.seed, &[78]);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += r.gen_range(-0.1..0.1);
        }
    }
    let samples = random_samples(cfg, n_samples, cfg.seed);
    let weights = [0.7, 1.6, 1.1];
    let analytic = analytic_grad(&params, &samples, &weights, cfg.dropout);
    let n_tensors = params.tensors().len();
    let mut worst: f64 = 0.0;
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        let mut numeric = vec![0.0; len];
        for (j, num) in numeric.iter_mut().enumerate() {
            let orig = params.tensors()[t][j];
            params.tensors_mut()[t][j] = orig + step;
            let up = loss(&params, &samples, &weights, cfg.dropout);
            params.tensors_mut()[t][j] = orig - step;
            let down = loss(&params, &samples, &weights, cfg.dropout);
            params.tensors_mut()[t][j] = orig;
            *num = (up - down) / (2.0 * step);
        }
        let a = analytic.tensors()[t];
        let diff: f64 = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

/// Per-class F1 from explicit precision and recall, as exact fractions
/// compared by cross-multiplication.
pub fn f1_oracle(preds: &[usize], labels: &[usize]) -> [f64; N_CLASSES] {
    std::array::from_fn(|c| {
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|(&p, &l)| p == c && l == c)
            .count() as f64;
        let predicted = preds.iter().filter(|&&p| p == c).count() as f64;
        let actual = labels.iter().filter(|&&l| l == c).count() as f64;
        let precision = if predicted == 0.0 {
            0.0
        } else {
            tp / predicted
        };
        let recall = if actual == 0.0 { 0.0 } else { tp / actual };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    })
}

/// KNN by sorting every training row.
pub fn knn_oracle(
    rows: &[Vec<f32>],
    labels: &[Veracity],
    k: usize,
    metric: Metric,
    q: &[f32],
) -> Veracity {
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (metric.distance(r, q), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [0usize; N_CLASSES];
    let mut dsum = [0f64; N_CLASSES];
    for &(d, i) in &all[..k] {
        votes[labels[i].index()] += 1;
        dsum[labels[i].index()] += d;
    }
    let mut best: Option<usize> = None;
    for c in 0..N_CLASSES {
        if votes[c] == 0 {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if votes[c] > votes[b] || (votes[c] == votes[b] && dsum[c] < dsum[b]) => {
                Some(c)
            }
            keep => keep,
        };
    }
    Veracity::from_index(best.unwrap()).unwrap()
}

pub fn idx_to_labels(xs: &[usize]) -> Vec<Veracity> {
    xs.iter()
        .map(|&i| Veracity::from_index(i).unwrap())
        .collect()
}
