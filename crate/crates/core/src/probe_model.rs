//! The probing classifier.
//!
//! Each of the K inputs goes through its own projection to `hidden_size`,
//! then ReLU and dropout. The K hidden vectors are concatenated in setup
//! order and mapped to class logits by one output layer. With K = 1 this is
//! simply two linear layers in sequence.
//!
//! Parameters are held as f64 but kept on the f32 grid (see
//! [`ProbeParams::round_to_f32`]) so checkpoints, which store f32, round-trip
//! exactly. All dot products accumulate in f64.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{Veracity, N_CLASSES};
use crate::rng;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PFCKPT01";

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} input vectors, got {found}")]
    InputCount { expected: usize, found: usize },
    #[error("input {index}: expected dimension {expected}, got {found}")]
    InputDim {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("no gradient path: forward ran in eval mode")]
    NoGradientPath,
    #[error("upstream gradient has length {found}, expected {expected}")]
    UpstreamLen { expected: usize, found: usize },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ProbeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub input_dims: Vec<usize>,
    pub hidden_size: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(input_dims: Vec<usize>, hidden_size: usize, dropout: f64, seed: u64) -> Self {
        Self {
            input_dims,
            hidden_size,
            n_classes: N_CLASSES,
            dropout,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dims.is_empty() {
            return Err(ProbeError::InvalidConfig("no inputs".into()));
        }
        if let Some(i) = self.input_dims.iter().position(|&d| d == 0) {
            return Err(ProbeError::InvalidConfig(format!(
                "input {i} has dimension 0"
            )));
        }
        if self.hidden_size == 0 {
            return Err(ProbeError::InvalidConfig(
                "hidden_size must be positive".into(),
            ));
        }
        if self.n_classes == 0 {
            return Err(ProbeError::InvalidConfig(
                "n_classes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ProbeError::InvalidConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.input_dims.len()
    }
}

/// Learned parameter count for a configuration.
pub fn count_params(config: &ProbeConfig) -> usize {
    let h = config.hidden_size;
    let projections: usize = config.input_dims.iter().map(|d| h * d + h).sum();
    projections + config.n_classes * (config.n_inputs() * h) + config.n_classes
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, &b)| {
            b + self
                .weight
                .row(r)
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    /// One projection per input, `hidden_size x input_dims[i]`.
    pub projections: Vec<Linear>,
    /// `n_classes x (K * hidden_size)`.
    pub output: Linear,
}

impl ProbeParams {
    pub fn zeros(config: &ProbeConfig) -> Self {
        let h = config.hidden_size;
        Self {
            projections: config
                .input_dims
                .iter()
                .map(|&d| Linear::zeros(h, d))
                .collect(),
            output: Linear::zeros(config.n_classes, config.n_inputs() * h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projections: self
                .projections
                .iter()
                .map(|l| Linear::zeros(l.weight.rows, l.weight.cols))
                .collect(),
            output: Linear::zeros(self.output.weight.rows, self.output.weight.cols),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.output.weight.cols / self.projections.len().max(1)
    }

    pub fn n_classes(&self) -> usize {
        self.output.bias.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.projections.iter().map(|l| l.weight.cols).collect()
    }

    /// Parameter tensors in declaration order: W_1, b_1, ..., W_K, b_K, V, c.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.projections.len() + 2);
        for l in self.projections.iter().chain(std::iter::once(&self.output)) {
            out.push(l.weight.data.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.projections.len() + 2);
        for l in self
            .projections
            .iter_mut()
            .chain(std::iter::once(&mut self.output))
        {
            out.push(l.weight.data.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Snaps every entry to the nearest f32.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ProbeParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
pub fn init_probe(config: &ProbeConfig) -> Result<ProbeParams> {
    config.validate()?;
    let mut params = ProbeParams::zeros(config);
    let mut r = rng::stream(config.seed, &[rng::tag::INIT]);
    for l in params
        .projections
        .iter_mut()
        .chain(std::iter::once(&mut params.output))
    {
        let bound = 1.0 / (l.weight.cols as f64).sqrt();
        for w in l.weight.data.iter_mut() {
            *w = r.gen_range(-bound..=bound);
        }
    }
    params.round_to_f32();
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Inverted dropout with drop probability `dropout`.
    Train {
        dropout: f64,
    },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    /// Per-unit multipliers: 0 for dropped units, `1/(1-p)` for kept ones.
    /// `None` in eval mode.
    pub masks: Option<Vec<Vec<f64>>>,
    pub concat: Vec<f64>,
    pub logits: Vec<f64>,
}

fn check_row<T>(params: &ProbeParams, row: &[&[T]]) -> Result<()> {
    if row.len() != params.projections.len() {
        return Err(ProbeError::InputCount {
            expected: params.projections.len(),
            found: row.len(),
        });
    }
    for (index, (x, l)) in row.iter().zip(&params.projections).enumerate() {
        if x.len() != l.weight.cols {
            return Err(ProbeError::InputDim {
                index,
                expected: l.weight.cols,
                found: x.len(),
            });
        }
    }
    Ok(())
}

pub fn forward<T, R>(
    params: &ProbeParams,
    row: &[&[T]],
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, ForwardCache)>
where
    T: Copy + Into<f64>,
    R: Rng + ?Sized,
{
    check_row(params, row)?;
    let h = params.hidden_size();
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(row.len()),
        pre_activations: Vec::with_capacity(row.len()),
        activations: Vec::with_capacity(row.len()),
        masks: match mode {
            Mode::Train { .. } => Some(Vec::with_capacity(row.len())),
            Mode::Eval => None,
        },
        concat: Vec::with_capacity(row.len() * h),
        logits: Vec::new(),
    };
    let mut z = Vec::with_capacity(h);
    for (x, l) in row.iter().zip(&params.projections) {
        let x: Vec<f64> = x.iter().map(|&v| v.into()).collect();
        l.apply(&x, &mut z);
        let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        if let (Mode::Train { dropout }, Some(masks)) = (mode, cache.masks.as_mut()) {
            let keep_scale = 1.0 / (1.0 - dropout);
            let m: Vec<f64> = (0..h)
                .map(|_| {
                    if dropout > 0.0 && rng.gen::<f64>() < dropout {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect();
            a.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
            masks.push(m);
        }
        cache.concat.extend_from_slice(&a);
        cache.inputs.push(x);
        cache.pre_activations.push(z.clone());
        cache.activations.push(a);
    }
    let mut logits = Vec::with_capacity(params.n_classes());
    params.output.apply(&cache.concat, &mut logits);
    cache.logits = logits.clone();
    Ok((logits, cache))
}

/// Eval-mode logits without keeping a cache.
pub fn logits<T: Copy + Into<f64>>(params: &ProbeParams, row: &[&[T]]) -> Result<Vec<f64>> {
    check_row(params, row)?;
    let mut concat = Vec::with_capacity(params.output.weight.cols);
    let mut z = Vec::new();
    let mut x64 = Vec::new();
    for (x, l) in row.iter().zip(&params.projections) {
        x64.clear();
        x64.extend(x.iter().map(|&v| v.into()));
        l.apply(&x64, &mut z);
        concat.extend(z.iter().map(|v| v.max(0.0)));
    }
    let mut out = Vec::new();
    params.output.apply(&concat, &mut out);
    Ok(out)
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Copy + Into<f64>>(params: &ProbeParams, row: &[&[T]]) -> Result<Veracity> {
    let l = logits(params, row)?;
    Ok(Veracity::from_index(argmax(&l)).expect("three-class output layer"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ProbeParams,
    pub inputs: Vec<Vec<f64>>,
}

fn backward_impl(
    params: &ProbeParams,
    cache: &ForwardCache,
    upstream: &[f64],
    grads: &mut ProbeParams,
    mut input_grads: Option<&mut Vec<Vec<f64>>>,
) -> Result<()> {
    let masks = cache.masks.as_ref().ok_or(ProbeError::NoGradientPath)?;
    let n_classes = params.n_classes();
    if upstream.len() != n_classes {
        return Err(ProbeError::UpstreamLen {
            expected: n_classes,
            found: upstream.len(),
        });
    }
    let h = params.hidden_size();
    let out = &params.output;
    let width = out.weight.cols;

    let mut d_concat = vec![0.0; width];
    for (c, &g) in upstream.iter().enumerate() {
        grads.output.bias[c] += g;
        if g == 0.0 {
            continue;
        }
        let gw = &mut grads.output.weight.data[c * width..(c + 1) * width];
        for ((gw, &u), (dc, &w)) in gw
            .iter_mut()
            .zip(&cache.concat)
            .zip(d_concat.iter_mut().zip(out.weight.row(c)))
        {
            *gw += g * u;
            *dc += g * w;
        }
    }

    for (i, l) in params.projections.iter().enumerate() {
        let d_a = &d_concat[i * h..(i + 1) * h];
        let dz: Vec<f64> = d_a
            .iter()
            .zip(&masks[i])
            .zip(&cache.pre_activations[i])
            .map(|((&g, &m), &z)| if z > 0.0 { g * m } else { 0.0 })
            .collect();
        let x = &cache.inputs[i];
        let gl = &mut grads.projections[i];
        let cols = l.weight.cols;
        for (r, &g) in dz.iter().enumerate() {
            gl.bias[r] += g;
            if g == 0.0 {
                continue;
            }
            for (gw, &xv) in gl.weight.data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *gw += g * xv;
            }
        }
        if let Some(ig) = input_grads.as_deref_mut() {
            let mut dx = vec![0.0; cols];
            for (r, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (d, &w) in dx.iter_mut().zip(l.weight.row(r)) {
                    *d += g * w;
                }
            }
            ig.push(dx);
        }
    }
    Ok(())
}

/// Reverse-mode gradients of `upstream . logits` with respect to every
/// parameter and every input vector.
pub fn backward(params: &ProbeParams, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    let mut inputs = Vec::with_capacity(params.projections.len());
    backward_impl(params, cache, upstream, &mut grads, Some(&mut inputs))?;
    Ok(Gradients {
        params: grads,
        inputs,
    })
}

/// Adds parameter gradients into `grads` (input gradients are skipped).
pub fn accumulate_backward(
    params: &ProbeParams,
    cache: &ForwardCache,
    upstream: &[f64],
    grads: &mut ProbeParams,
) -> Result<()> {
    backward_impl(params, cache, upstream, grads, None)
}

/// A saved model: configuration, training position, and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ProbeConfig,
    pub epoch: usize,
    pub val_loss: Option<f64>,
    pub params: ProbeParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ProbeConfig,
    seed: u64,
    epoch: usize,
    val_loss: Option<f64>,
}

impl Checkpoint {
    /// Layout: magic, u32 header length, JSON header, then every tensor in
    /// declaration order as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            seed: self.config.seed,
            epoch: self.epoch,
            val_loss: self.val_loss.filter(|v| v.is_finite()),
        })
        .expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            for &x in t {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(ProbeError::BadMagic);
        }
        let len_bytes = bytes.get(8..12).ok_or(ProbeError::Truncated)?;
        let header_len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .ok_or(ProbeError::Truncated)?;
        let header: CheckpointHeader =
            serde_json::from_slice(bytes.get(12..header_end).ok_or(ProbeError::Truncated)?)
                .map_err(|e| ProbeError::Header(e.to_string()))?;
        header.config.validate()?;
        if header.seed != header.config.seed {
            return Err(ProbeError::Header("seed disagrees with config".into()));
        }
        let mut params = ProbeParams::zeros(&header.config);
        let mut pos = header_end;
        for t in params.tensors_mut() {
            let need = 4 * t.len();
            let chunk = bytes.get(pos..pos + need).ok_or(ProbeError::Truncated)?;
            for (x, b) in t.iter_mut().zip(chunk.chunks_exact(4)) {
                *x = f32::from_le_bytes(b.try_into().unwrap()) as f64;
            }
            pos += need;
        }
        if pos != bytes.len() {
            return Err(ProbeError::TrailingBytes(bytes.len() - pos));
        }
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            val_loss: header.val_loss,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| ProbeError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ProbeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
