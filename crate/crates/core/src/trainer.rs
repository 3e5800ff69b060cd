//! Training loop for the probing classifier.
//!
//! Weighted cross-entropy, Adam, a linear-warmup cosine schedule stepped once
//! per optimizer step, and early stopping on validation loss with the best
//! checkpoint kept.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_store::JoinedDataset;
use crate::label::{Veracity, N_CLASSES};
use crate::par;
use crate::probe_model::{self, Mode, ProbeConfig, ProbeError, ProbeParams};
use crate::rng;

/// Minibatch items per gradient chunk. Chunks are reduced in order, so the
/// result does not depend on how many threads ran them.
const GRAD_CHUNK: usize = 32;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("class {0:?} has zero training instances")]
    EmptyClass(Veracity),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("data dims {data:?} do not match probe input dims {probe:?}")]
    DimMismatch { data: Vec<usize>, probe: Vec<usize> },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub warmup_ratio: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Inverse-frequency class weights in the loss. Off means unit weights.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            peak_lr: 1e-3,
            max_epochs: 20,
            patience: 5,
            warmup_ratio: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        Ok(())
    }
}

/// `w_c = N / (3 * counts[c])`: inverse class frequency with mean weight 1.
pub fn class_weights(counts: &[usize; N_CLASSES]) -> Result<[f64; N_CLASSES]> {
    if let Some(c) = Veracity::ALL.iter().find(|c| counts[c.index()] == 0) {
        return Err(TrainError::EmptyClass(*c));
    }
    let total: usize = counts.iter().sum();
    Ok(counts.map(|n| total as f64 / (N_CLASSES as f64 * n as f64)))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Single-sample weighted cross-entropy and its gradient w.r.t. the logits.
pub fn weighted_cross_entropy(logits: &[f64], label: usize, weights: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    let w = weights[label];
    let loss = -w * (logits[label] - max - log_sum);
    let grad = logits
        .iter()
        .enumerate()
        .map(|(c, &l)| {
            let p = (l - max - log_sum).exp();
            w * (p - if c == label { 1.0 } else { 0.0 })
        })
        .collect();
    (loss, grad)
}

/// Batch loss: `sum_i loss_i / sum_i w_{label_i}`.
pub fn batch_loss(logits: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> f64 {
    let (num, den) = logits
        .iter()
        .zip(labels)
        .fold((0.0, 0.0), |(num, den), (l, &y)| {
            (
                num + weighted_cross_entropy(l, y, weights).0,
                den + weights[y],
            )
        });
    num / den
}

fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    // the epsilon absorbs representation error, e.g. 0.05 * 380 = 19.000000000000004
    ((warmup_ratio * total_steps as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Learning rate at optimizer step `step` (0-based) of `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, warmup_ratio: f64, peak_lr: f64) -> f64 {
    let total = total_steps.max(1);
    let warm = warmup_steps(total, warmup_ratio).min(total);
    if step < warm {
        return peak_lr * step as f64 / warm as f64;
    }
    if step >= total {
        return 0.0;
    }
    let progress = (step - warm) as f64 / (total - warm) as f64;
    peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(c: &TrainConfig) -> Self {
        Self {
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ProbeParams,
    pub v: ProbeParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ProbeParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update on flat slices, with `t` already advanced.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hp: AdamHyper,
) {
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

pub fn adam_step(
    params: &mut ProbeParams,
    grads: &ProbeParams,
    state: &mut AdamState,
    lr: f64,
    hp: AdamHyper,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    state.t += 1;
    let t = state.t;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        adam_update(p, g, m, v, t, lr, hp);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr_last: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub best_params: ProbeParams,
    /// 1-based; 0 when no epoch completed.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
    pub diverged: bool,
    pub class_weights: [f64; N_CLASSES],
}

impl TrainResult {
    pub fn epochs_run(&self) -> usize {
        self.log.len()
    }
}

fn check_dims(probe: &ProbeConfig, data: &JoinedDataset) -> Result<()> {
    if data.dims != probe.input_dims {
        return Err(TrainError::DimMismatch {
            data: data.dims.clone(),
            probe: probe.input_dims.clone(),
        });
    }
    Ok(())
}

/// Weighted mean cross-entropy over a dataset in eval mode.
pub fn evaluate_loss(params: &ProbeParams, data: &JoinedDataset, weights: &[f64]) -> Result<f64> {
    let parts = par::map_chunks(&data.rows, EVAL_CHUNK, |_, rows| -> Result<(f64, f64)> {
        let mut num = 0.0;
        let mut den = 0.0;
        for r in rows {
            let l = probe_model::logits(params, &r.inputs())?;
            let y = r.label.index();
            num += weighted_cross_entropy(&l, y, weights).0;
            den += weights[y];
        }
        Ok((num, den))
    });
    let (mut num, mut den) = (0.0, 0.0);
    for p in parts {
        let (n, d) = p?;
        num += n;
        den += d;
    }
    Ok(num / den)
}

pub fn predict_dataset(params: &ProbeParams, data: &JoinedDataset) -> Result<Vec<Veracity>> {
    par::map(&data.rows, |_, r| probe_model::predict(params, &r.inputs()))
        .into_iter()
        .map(|p| p.map_err(TrainError::from))
        .collect()
}

struct BatchOutcome {
    grads: ProbeParams,
    loss_sum: f64,
    weight_sum: f64,
}

#[allow(clippy::too_many_arguments)]
fn batch_gradient(
    params: &ProbeParams,
    data: &JoinedDataset,
    order: &[usize],
    first_pos: usize,
    dropout: f64,
    weights: &[f64],
    seed: u64,
    epoch: usize,
) -> Result<BatchOutcome> {
    let parts = par::map_chunks(order, GRAD_CHUNK, |offset, idx| -> Result<BatchOutcome> {
        let mut out = BatchOutcome {
            grads: params.zeros_like(),
            loss_sum: 0.0,
            weight_sum: 0.0,
        };
        for (j, &i) in idx.iter().enumerate() {
            let pos = (first_pos + offset + j) as u64;
            let mut r = rng::stream(seed, &[rng::tag::DROPOUT, epoch as u64, pos]);
            let row = &data.rows[i];
            let (logits, cache) =
                probe_model::forward(params, &row.inputs(), Mode::Train { dropout }, &mut r)?;
            let y = row.label.index();
            let (loss, upstream) = weighted_cross_entropy(&logits, y, weights);
            probe_model::accumulate_backward(params, &cache, &upstream, &mut out.grads)?;
            out.loss_sum += loss;
            out.weight_sum += weights[y];
        }
        Ok(out)
    });
    let mut total: Option<BatchOutcome> = None;
    for p in parts {
        let p = p?;
        match total.as_mut() {
            None => total = Some(p),
            Some(t) => {
                t.grads.add_assign(&p.grads);
                t.loss_sum += p.loss_sum;
                t.weight_sum += p.weight_sum;
            }
        }
    }
    let mut total = total.expect("non-empty batch");
    total.grads.scale(1.0 / total.weight_sum);
    Ok(total)
}

/// Trains with the validation loss computed on `val_data`.
pub fn train(
    probe_config: &ProbeConfig,
    train_data: &JoinedDataset,
    val_data: &JoinedDataset,
    config: &TrainConfig,
) -> Result<TrainResult> {
    if val_data.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    check_dims(probe_config, val_data)?;
    let weights = loss_weights(train_data, config)?;
    train_with_validator(probe_config, train_data, config, |_, params| {
        evaluate_loss(params, val_data, &weights)
    })
}

fn loss_weights(train_data: &JoinedDataset, config: &TrainConfig) -> Result<[f64; N_CLASSES]> {
    if config.class_weighting {
        class_weights(&train_data.class_counts())
    } else {
        Ok([1.0; N_CLASSES])
    }
}

/// Training loop with a caller-supplied validation loss. `validate` receives
/// the 1-based epoch and the parameters at the end of that epoch.
pub fn train_with_validator<F>(
    probe_config: &ProbeConfig,
    train_data: &JoinedDataset,
    config: &TrainConfig,
    mut validate: F,
) -> Result<TrainResult>
where
    F: FnMut(usize, &ProbeParams) -> Result<f64>,
{
    config.validate()?;
    probe_config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    check_dims(probe_config, train_data)?;
    let weights = loss_weights(train_data, config)?;
    let hp = AdamHyper::from(config);

    let mut params = probe_model::init_probe(probe_config)?;
    let mut adam = AdamState::new(&params);
    let n = train_data.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.max_epochs * batches_per_epoch;

    let mut result = TrainResult {
        best_params: params.clone(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        log: Vec::new(),
        stopped_early: false,
        diverged: false,
        class_weights: weights,
    };
    let mut step = 0usize;
    let mut since_improvement = 0usize;

    'epochs: for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(
            config.seed,
            &[rng::tag::SHUFFLE, epoch as u64],
        ));

        let (mut loss_sum, mut weight_sum) = (0.0, 0.0);
        let mut lr = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let out = batch_gradient(
                &params,
                train_data,
                batch,
                b * config.batch_size,
                probe_config.dropout,
                &weights,
                config.seed,
                epoch,
            )?;
            if !out.loss_sum.is_finite() {
                result.diverged = true;
                break 'epochs;
            }
            lr = cosine_lr(step, total_steps, config.warmup_ratio, config.peak_lr);
            match adam_step(&mut params, &out.grads, &mut adam, lr, hp) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient) => {
                    result.diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            params.round_to_f32();
            if !params.is_finite() {
                result.diverged = true;
                break 'epochs;
            }
            step += 1;
            loss_sum += out.loss_sum;
            weight_sum += out.weight_sum;
        }

        let train_loss = loss_sum / weight_sum;
        let val_loss = validate(epoch, &params)?;
        if !val_loss.is_finite() {
            result.diverged = true;
            break;
        }
        let improved = val_loss < result.best_val_loss;
        result.train_losses.push(train_loss);
        result.val_losses.push(val_loss);
        result.log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr_last: lr,
            improved,
        });
        if improved {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_params = params.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.patience {
                result.stopped_early = true;
                break;
            }
        }
    }
    Ok(result)
}
