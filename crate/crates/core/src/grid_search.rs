//! Hyperparameter grid over learning rate, batch size, hidden size and
//! dropout.
//!
//! Every grid point trains with the same base seed, so differences between
//! points come from the hyperparameters alone. Points may run concurrently;
//! results are merged by grid index. The selected configuration is retrained
//! (deterministically, so identically) to recover its checkpoint, and only
//! that checkpoint is ever scored on the test split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_store::JoinedDataset;
use crate::metrics::{self, EvalReport, MetricsError};
use crate::par;
use crate::probe_model::{ProbeConfig, ProbeParams};
use crate::trainer::{self, TrainConfig, TrainError, TrainResult};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid space is empty")]
    EmptySpace,
    #[error("every grid configuration diverged")]
    AllDiverged,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub hidden_sizes: Vec<usize>,
    pub dropouts: Vec<f64>,
}

impl Default for GridSpace {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            batch_sizes: vec![32, 64, 128],
            hidden_sizes: vec![128, 256, 512],
            dropouts: vec![0.05, 0.1, 0.2, 0.4],
        }
    }
}

impl GridSpace {
    pub fn len(&self) -> usize {
        self.learning_rates.len()
            * self.batch_sizes.len()
            * self.hidden_sizes.len()
            * self.dropouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One grid configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub dropout: f64,
}

impl GridPoint {
    /// Probe and train configs for this point on top of `base`.
    pub fn configs(&self, input_dims: &[usize], base: &TrainConfig) -> (ProbeConfig, TrainConfig) {
        let probe = ProbeConfig::new(
            input_dims.to_vec(),
            self.hidden_size,
            self.dropout,
            base.seed,
        );
        let train = TrainConfig {
            peak_lr: self.learning_rate,
            batch_size: self.batch_size,
            ..base.clone()
        };
        (probe, train)
    }

    /// Batch size, learning rate, hidden size and dropout separated by ` / `.
    pub fn fields(&self) -> String {
        format!(
            "{} / {} / {} / {}",
            self.batch_size, self.learning_rate, self.hidden_size, self.dropout
        )
    }
}

/// All points in lexicographic (lr, batch, hidden, dropout) order.
pub fn enumerate_grid(space: &GridSpace) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(space.len());
    for &learning_rate in &space.learning_rates {
        for &batch_size in &space.batch_sizes {
            for &hidden_size in &space.hidden_sizes {
                for &dropout in &space.dropouts {
                    out.push(GridPoint {
                        learning_rate,
                        batch_size,
                        hidden_size,
                        dropout,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    ValLoss,
    ValF1,
}

impl std::str::FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "val-loss" => Ok(Selection::ValLoss),
            "val-f1" => Ok(Selection::ValF1),
            other => Err(format!("unknown selection criterion: {other}")),
        }
    }
}

/// Summary record for one trained grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRunSummary {
    pub index: usize,
    pub config: GridPoint,
    pub best_val_loss: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub diverged: bool,
    pub val_f1_macro: Option<f64>,
}

impl GridRunSummary {
    fn usable(&self) -> bool {
        !self.diverged && self.best_val_loss.is_some_and(f64::is_finite)
    }
}

/// Index of the winning summary; ties go to the earlier grid index.
pub fn select_best(summaries: &[GridRunSummary], criterion: Selection) -> Option<usize> {
    let usable = summaries.iter().enumerate().filter(|(_, s)| s.usable());
    match criterion {
        Selection::ValLoss => usable
            .min_by(|(ia, a), (ib, b)| {
                a.best_val_loss
                    .unwrap()
                    .total_cmp(&b.best_val_loss.unwrap())
                    .then(ia.cmp(ib))
            })
            .map(|(i, _)| i),
        Selection::ValF1 => usable
            .max_by(|(ia, a), (ib, b)| {
                a.val_f1_macro
                    .unwrap_or(0.0)
                    .total_cmp(&b.val_f1_macro.unwrap_or(0.0))
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i),
    }
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    /// Shared by every point; sets both init and training seeds.
    pub base: TrainConfig,
    pub workers: usize,
    pub selection: Selection,
    /// Labels for the test report.
    pub model: String,
    pub input_setup: String,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            workers: 1,
            selection: Selection::ValLoss,
            model: String::new(),
            input_setup: String::new(),
        }
    }
}

pub struct DataSplits<'a> {
    pub train: &'a JoinedDataset,
    pub val: &'a JoinedDataset,
    pub test: &'a JoinedDataset,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub summaries: Vec<GridRunSummary>,
    pub best_index: usize,
    pub best_config: GridPoint,
    pub best_probe: ProbeConfig,
    pub best_train: TrainConfig,
    pub best_result: TrainResult,
    pub test_report: EvalReport,
    /// How many times the test split was scored; always 1.
    pub test_evaluations: usize,
}

fn val_f1(result: &TrainResult, val: &JoinedDataset) -> Result<f64> {
    let preds = trainer::predict_dataset(&result.best_params, val)?;
    let cm = metrics::confusion(&preds, &val.labels())?;
    Ok(metrics::f1_macro(&metrics::f1_per_class(&cm)))
}

fn summarize(
    index: usize,
    config: GridPoint,
    r: &TrainResult,
    val_f1_macro: Option<f64>,
) -> GridRunSummary {
    GridRunSummary {
        index,
        config,
        best_val_loss: r.best_val_loss.is_finite().then_some(r.best_val_loss),
        best_epoch: r.best_epoch,
        epochs_run: r.epochs_run(),
        stopped_early: r.stopped_early,
        diverged: r.diverged,
        val_f1_macro,
    }
}

/// Runs the grid and scores the selected checkpoint on `data.test`.
pub fn run_grid(
    data: DataSplits<'_>,
    space: &GridSpace,
    options: &GridOptions,
) -> Result<GridResult> {
    let test = data.test;
    run_grid_scored(data.train, data.val, space, options, |params| {
        let preds = trainer::predict_dataset(params, test)?;
        Ok(EvalReport::from_predictions(
            options.model.clone(),
            options.input_setup.clone(),
            test.dataset.to_string(),
            &preds,
            &test.labels(),
            test.diagnostics.dropped as u64,
        )?)
    })
}

/// Grid over train/val only. `score_test` is called once, with the retrained
/// best parameters, and never sees any other point.
pub fn run_grid_scored<F>(
    train: &JoinedDataset,
    val: &JoinedDataset,
    space: &GridSpace,
    options: &GridOptions,
    mut score_test: F,
) -> Result<GridResult>
where
    F: FnMut(&ProbeParams) -> Result<EvalReport>,
{
    let points = enumerate_grid(space);
    if points.is_empty() {
        return Err(GridError::EmptySpace);
    }
    let dims = train.dims.clone();
    let run_point = |index: usize, p: &GridPoint| -> Result<GridRunSummary> {
        let (probe, cfg) = p.configs(&dims, &options.base);
        let r = trainer::train(&probe, train, val, &cfg)?;
        let f1 = if r.diverged {
            None
        } else {
            Some(val_f1(&r, val)?)
        };
        Ok(summarize(index, *p, &r, f1))
    };
    let summaries = par::with_workers(options.workers, || par::map(&points, run_point))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let best_index = select_best(&summaries, options.selection).ok_or(GridError::AllDiverged)?;
    let best_config = points[best_index];
    let (best_probe, best_train) = best_config.configs(&dims, &options.base);
    let best_result = trainer::train(&best_probe, train, val, &best_train)?;

    let mut test_evaluations = 0;
    let test_report = {
        test_evaluations += 1;
        score_test(&best_result.best_params)?
    };

    Ok(GridResult {
        summaries,
        best_index,
        best_config,
        best_probe,
        best_train,
        best_result,
        test_report,
        test_evaluations,
    })
}

/// One row of the best-parameters table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParamsRow {
    pub embedding: String,
    pub input: String,
    pub config: GridPoint,
}

/// Columns: Embedding, Input, Batch size, Learning rate, Hidden size, Dropout.
pub fn export_best_params(rows: &[BestParamsRow]) -> String {
    let header = [
        "Embedding",
        "Input",
        "Batch size",
        "Learning rate",
        "Hidden size",
        "Dropout",
    ]
    .map(String::from);
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.embedding.clone(),
                r.input.clone(),
                r.config.batch_size.to_string(),
                r.config.learning_rate.to_string(),
                r.config.hidden_size.to_string(),
                r.config.dropout.to_string(),
            ]
        })
        .collect();
    metrics::render_table(&header, &body, 2)
}
