//! `factprobe`: train and evaluate probing classifiers on pooled embeddings.

mod data;
mod fail;
mod output;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use factprobe::baselines::{self, KnnModel, Metric};
use factprobe::embedding_store::{self, EmbeddingManifest, PooledEmbedding, PRESETS};
use factprobe::grid_search::{self, BestParamsRow, GridOptions, GridSpace, Selection};
use factprobe::metrics::{self, EvalReport, ReportFormat};
use factprobe::probe_model::{Checkpoint, ProbeConfig};
use factprobe::trainer::{self, TrainConfig, TrainResult};
use factprobe::{par, DatasetId, InputSetup, JoinedDataset, Split, Veracity};
use serde::{Deserialize, Serialize};

use data::{FileEntry, Loaded, ValSource};
use fail::{missing_file, schema};
use output::RunDir;

const PRESET_HELP: &str = "Presets (setup order is part of the model):
  mm_claim              mm_claim
  mm_claim+mm_evidence  mm_claim, mm_evidence
  input1                claim, claim_image
  input2                claim, claim_image, evidence_text, evidence_image
  input3                mm_claim, mm_image
  input4                mm_text, mm_image

Exit status: 0 ok, 2 usage error, 3 missing file, 4 invalid input file or
schema violation, 5 runtime failure.";

#[derive(Parser)]
#[command(
    name = "factprobe",
    version,
    about = "Probing classifiers for multimodal fact verification"
)]
#[command(after_help = PRESET_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-pool token matrices (JSON lines) into an embedding file
    Pool(PoolArgs),
    /// Join embedding files per split and print join diagnostics
    #[command(after_help = PRESET_HELP)]
    Join(JoinArgs),
    /// Train one probe and score it
    #[command(after_help = PRESET_HELP)]
    Train(TrainArgs),
    /// Train every grid point, select the best, score it on test once
    #[command(after_help = PRESET_HELP)]
    Gridsearch(GridArgs),
    /// Fit and score a KNN or linear SVM baseline
    #[command(after_help = PRESET_HELP)]
    Baseline(BaselineArgs),
    /// Score a saved checkpoint
    #[command(after_help = PRESET_HELP)]
    Eval(EvalArgs),
    /// Render saved report records as one table
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset the embedding files belong to: mocheg or factify2
    #[arg(long, value_parser = parse_dataset)]
    dataset: DatasetId,
    /// Named input setup list (see presets below)
    #[arg(long, value_parser = preset_names(), conflicts_with = "setups", required_unless_present = "setups")]
    preset: Option<String>,
    /// Explicit comma-separated setup list, in input order
    #[arg(long, value_delimiter = ',', value_parser = parse_setup)]
    setups: Option<Vec<InputSetup>>,
    /// Embedding files; each manifest says which split and setup it holds
    #[arg(long, num_args = 1.., required = true)]
    embeddings: Vec<PathBuf>,
    /// Base seed for initialization, shuffling, dropout and splitting
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl DataArgs {
    fn setup_list(&self) -> Vec<InputSetup> {
        match (&self.preset, &self.setups) {
            (Some(p), _) => embedding_store::preset(p)
                .expect("validated by clap")
                .to_vec(),
            (None, Some(s)) => s.clone(),
            (None, None) => unreachable!("clap requires one of them"),
        }
    }

    fn inputs_label(&self) -> String {
        self.preset.clone().unwrap_or_else(|| {
            self.setup_list()
                .iter()
                .map(|s| s.key())
                .collect::<Vec<_>>()
                .join("+")
        })
    }

    fn load(&self) -> Result<Loaded> {
        let setups = self.setup_list();
        if setups.is_empty() {
            bail!(schema("empty setup list"));
        }
        data::load(&self.embeddings, self.dataset, &setups)
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory for manifest, logs, checkpoint and reports
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for data-parallel loops (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Model name shown in reports (default: source model of the inputs)
    #[arg(long)]
    model: Option<String>,
}

impl OutArgs {
    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Records => ReportFormat::Records,
        }
    }
}

#[derive(Args, Clone)]
struct SchedArgs {
    #[arg(long, default_value_t = 20)]
    max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.05)]
    warmup_ratio: f64,
    /// Use unit class weights instead of inverse-frequency weights
    #[arg(long)]
    no_class_weights: bool,
}

impl SchedArgs {
    fn base(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            warmup_ratio: self.warmup_ratio,
            seed,
            class_weighting: !self.no_class_weights,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct PoolArgs {
    /// JSON lines: {"id": ..., "label": "supported"|"refuted"|"nei"|0|1|2, "tokens": [[...], ...]}
    #[arg(long)]
    input: PathBuf,
    /// mocheg or factify2
    #[arg(long, value_parser = parse_dataset)]
    dataset: DatasetId,
    /// train, val or test
    #[arg(long, value_parser = parse_split)]
    split: Split,
    /// Input setup key, e.g. mm_claim or claim_image
    #[arg(long, value_parser = parse_setup)]
    setup: InputSetup,
    #[arg(long)]
    source_model: String,
    /// Embedding file to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JoinArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write join_diagnostics.json here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    sched: SchedArgs,
    /// Peak learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 128)]
    hidden_size: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceName {
    /// lr {1e-5..1e-1}, batch {32,64,128}, hidden {128,256,512}, dropout {0.05,0.1,0.2,0.4}
    Default,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    sched: SchedArgs,
    /// Base grid; the list flags below replace individual axes
    #[arg(long, value_enum, default_value_t = SpaceName::Default)]
    space: SpaceName,
    /// Learning rates, comma-separated
    #[arg(long, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,
    /// Batch sizes, comma-separated
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    /// Hidden sizes, comma-separated
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    /// Dropout probabilities, comma-separated
    #[arg(long, value_delimiter = ',')]
    dropouts: Option<Vec<f64>>,
    /// Selection criterion on the validation split: val-loss or val-f1
    #[arg(long, value_parser = parse_selection, default_value = "val-loss")]
    select: Selection,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Knn,
    Svm,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Neighbours for knn
    #[arg(long, default_value_t = baselines::DEFAULT_K)]
    k: usize,
    /// Distance for knn: euclidean or cosine
    #[arg(long, value_parser = parse_metric, default_value = "euclidean")]
    metric: Metric,
    /// L2 strength for svm
    #[arg(long, default_value_t = baselines::DEFAULT_SVM_LAMBDA)]
    lambda: f64,
    /// Passes over the training data for svm
    #[arg(long, default_value_t = baselines::DEFAULT_SVM_EPOCHS)]
    epochs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Split to score: train, val or test
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct ReportArgs {
    /// Report record files (JSON lines) in the order rows should appear
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the table here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_dataset(s: &str) -> Result<DatasetId, String> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

fn parse_setup(s: &str) -> Result<InputSetup, String> {
    s.parse()
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

fn preset_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(PRESETS.iter().map(|(n, _)| *n))
}

/// Everything needed to re-run a command bit-identically.
#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    seed: u64,
    dataset: DatasetId,
    inputs: String,
    setups: Vec<InputSetup>,
    embeddings: &'a [FileEntry],
    val_source: Option<ValSource>,
    workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<&'a ProbeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<&'a TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridManifest<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<&'a Path>,
}

#[derive(Serialize)]
struct GridManifest<'a> {
    space: &'a GridSpace,
    selection: Selection,
    base: &'a TrainConfig,
}

impl<'a> RunManifest<'a> {
    fn new(command: &'a str, data: &DataArgs, loaded: &'a Loaded, workers: usize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            seed: data.seed,
            dataset: data.dataset,
            inputs: data.inputs_label(),
            setups: data.setup_list(),
            embeddings: &loaded.files,
            val_source: None,
            workers,
            probe: None,
            train: None,
            grid: None,
            baseline: None,
            checkpoint: None,
        }
    }
}

fn model_name(out: &OutArgs, loaded: &Loaded) -> String {
    out.model.clone().unwrap_or_else(|| loaded.source_model())
}

fn score(
    model: &str,
    inputs: &str,
    data: &JoinedDataset,
    preds: &[Veracity],
) -> Result<EvalReport> {
    Ok(EvalReport::from_predictions(
        model,
        inputs,
        data.dataset.to_string(),
        preds,
        &data.labels(),
        data.diagnostics.dropped as u64,
    )?)
}

fn checkpoint_of(probe: &ProbeConfig, result: &TrainResult) -> Checkpoint {
    Checkpoint {
        config: probe.clone(),
        epoch: result.best_epoch,
        val_loss: result
            .best_val_loss
            .is_finite()
            .then_some(result.best_val_loss),
        params: result.best_params.clone(),
    }
}

/// Split the probe is scored on: test when given, else validation.
fn scoring_split(loaded: &Loaded) -> Result<&JoinedDataset> {
    loaded.get(Split::Test).or_else(|_| loaded.get(Split::Val))
}

fn cmd_pool(args: &PoolArgs) -> Result<()> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum LabelIn {
        Index(u8),
        Name(Veracity),
    }
    #[derive(Deserialize)]
    struct Line {
        id: String,
        label: LabelIn,
        tokens: Vec<Vec<f64>>,
    }

    if !args.input.exists() {
        return Err(missing_file(&args.input));
    }
    let file =
        fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", args.input.display(), i + 1);
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| schema(format!("{}: {e}", at())))?;
        let label = match parsed.label {
            LabelIn::Name(v) => v,
            LabelIn::Index(n) => {
                Veracity::try_from(n).map_err(|_| schema(format!("{}: label {n}", at())))?
            }
        };
        let vector = embedding_store::mean_pool(&parsed.tokens)
            .map_err(|e| schema(format!("{}: {e}", at())))?;
        records.push(PooledEmbedding {
            instance_id: parsed.id,
            vector,
            label,
        });
    }
    let ndim = records.first().map_or(0, |r| r.vector.len());
    if ndim == 0 {
        bail!(schema(format!(
            "{}: no token matrices",
            args.input.display()
        )));
    }
    let manifest = EmbeddingManifest::new(
        args.dataset,
        args.split,
        args.setup,
        &args.source_model,
        ndim,
        records.len(),
    );
    embedding_store::write_embedding_set(&manifest, &records, &args.out)?;
    eprintln!(
        "wrote {} records (ndim {ndim}) to {}",
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_join(args: &JoinArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let diag = loaded.diagnostics();
    let text = match args.format {
        Format::Records => {
            let mut s = String::new();
            for (split, d) in &diag {
                let mut v = serde_json::to_value(d)?;
                v["split"] = serde_json::json!(split);
                s.push_str(&serde_json::to_string(&v)?);
                s.push('\n');
            }
            s
        }
        Format::Text => diag
            .iter()
            .map(|(split, d)| {
                format!(
                    "{split}: {} joined, {} dropped (inputs {:?})\n",
                    d.joined, d.dropped, d.input_counts
                )
            })
            .collect(),
    };
    print!("{text}");
    if let Some(out) = &args.out {
        let dir = RunDir::create(out)?;
        let map: BTreeMap<String, _> = diag.iter().map(|(s, d)| (s.to_string(), d)).collect();
        dir.write_json("join_diagnostics.json", &map)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut loaded = args.data.load()?;
    let val_source = loaded.ensure_val(args.data.seed)?;
    let train = loaded.get(Split::Train)?;
    let val = loaded.get(Split::Val)?;
    let probe = ProbeConfig::new(
        train.dims.clone(),
        args.hidden_size,
        args.dropout,
        args.data.seed,
    );
    let cfg = TrainConfig {
        peak_lr: args.lr,
        batch_size: args.batch_size,
        ..args.sched.base(args.data.seed)
    };
    let workers = args.out.workers();
    let dir = RunDir::create(&args.out.out)?;
    let ckpt_path = dir.path("checkpoint.pfckpt");
    let mut manifest = RunManifest::new("train", &args.data, &loaded, workers);
    manifest.val_source = Some(val_source);
    manifest.probe = Some(&probe);
    manifest.train = Some(&cfg);
    manifest.checkpoint = Some(&ckpt_path);
    dir.write_json("run_manifest.json", &manifest)?;

    let result = par::with_workers(workers, || trainer::train(&probe, train, val, &cfg))?;
    dir.write_jsonl("train_log.jsonl", &result.log)?;
    if result.diverged {
        bail!(
            "training diverged (non-finite loss) after {} epochs",
            result.epochs_run()
        );
    }
    checkpoint_of(&probe, &result).save(&ckpt_path)?;

    let target = scoring_split(&loaded)?;
    let preds = par::with_workers(workers, || {
        trainer::predict_dataset(&result.best_params, target)
    })?;
    let report = score(
        &model_name(&args.out, &loaded),
        &args.data.inputs_label(),
        target,
        &preds,
    )?;
    print!("{}", dir.write_reports(&[report], args.out.format.into())?);
    eprintln!(
        "best epoch {} of {} (val loss {:.6}); outputs in {}",
        result.best_epoch,
        result.epochs_run(),
        result.best_val_loss,
        args.out.out.display()
    );
    Ok(())
}

fn cmd_gridsearch(args: &GridArgs) -> Result<()> {
    let mut loaded = args.data.load()?;
    let val_source = loaded.ensure_val(args.data.seed)?;
    let mut space = match args.space {
        SpaceName::Default => GridSpace::default(),
    };
    if let Some(v) = &args.lrs {
        space.learning_rates = v.clone();
    }
    if let Some(v) = &args.batch_sizes {
        space.batch_sizes = v.clone();
    }
    if let Some(v) = &args.hidden_sizes {
        space.hidden_sizes = v.clone();
    }
    if let Some(v) = &args.dropouts {
        space.dropouts = v.clone();
    }
    let model = model_name(&args.out, &loaded);
    let inputs = args.data.inputs_label();
    let base = args.sched.base(args.data.seed);
    let options = GridOptions {
        base: base.clone(),
        workers: args.out.workers(),
        selection: args.select,
        model: model.clone(),
        input_setup: inputs.clone(),
    };
    let dir = RunDir::create(&args.out.out)?;
    let ckpt_path = dir.path("checkpoint.pfckpt");
    let mut manifest = RunManifest::new("gridsearch", &args.data, &loaded, options.workers);
    manifest.val_source = Some(val_source);
    manifest.grid = Some(GridManifest {
        space: &space,
        selection: args.select,
        base: &base,
    });
    manifest.checkpoint = Some(&ckpt_path);
    dir.write_json("run_manifest.json", &manifest)?;

    let splits = grid_search::DataSplits {
        train: loaded.get(Split::Train)?,
        val: loaded.get(Split::Val)?,
        test: loaded.get(Split::Test)?,
    };
    eprintln!(
        "grid: {} configurations on {} workers",
        space.len(),
        options.workers
    );
    let result = grid_search::run_grid(splits, &space, &options)?;
    dir.write_jsonl("grid_summary.jsonl", &result.summaries)?;
    dir.write_jsonl("train_log.jsonl", &result.best_result.log)?;
    checkpoint_of(&result.best_probe, &result.best_result).save(&ckpt_path)?;
    let row = BestParamsRow {
        embedding: model,
        input: inputs,
        config: result.best_config,
    };
    dir.write(
        "best_params.txt",
        grid_search::export_best_params(std::slice::from_ref(&row)),
    )?;
    dir.write_jsonl("best_params.jsonl", &[&row])?;
    print!(
        "{}",
        dir.write_reports(&[result.test_report], args.out.format.into())?
    );
    eprintln!(
        "selected #{} ({}); outputs in {}",
        result.best_index,
        result.best_config.fields(),
        args.out.out.display()
    );
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let workers = args.out.workers();
    let train = loaded.get(Split::Train)?;
    let target = scoring_split(&loaded)?;
    let (queries, _) = baselines::flatten(target);
    let (label, settings, preds) = match args.kind {
        BaselineKind::Knn => {
            let model = KnnModel::fit(train, args.k, args.metric)?;
            let preds =
                par::with_workers(workers, || baselines::knn_predict_batch(&model, &queries))?;
            (
                "KNN",
                serde_json::json!({"kind": "knn", "k": args.k, "metric": args.metric}),
                preds,
            )
        }
        BaselineKind::Svm => {
            let model = par::with_workers(workers, || {
                baselines::svm_fit(train, args.lambda, args.epochs, args.data.seed)
            })?;
            let preds =
                par::with_workers(workers, || baselines::svm_predict_batch(&model, &queries))?;
            (
                "SVM",
                serde_json::json!({"kind": "svm", "lambda": args.lambda, "epochs": args.epochs}),
                preds,
            )
        }
    };
    let dir = RunDir::create(&args.out.out)?;
    let mut manifest = RunManifest::new("baseline", &args.data, &loaded, workers);
    manifest.baseline = Some(settings);
    dir.write_json("run_manifest.json", &manifest)?;
    let model = args
        .out
        .model
        .clone()
        .unwrap_or_else(|| format!("{label} ({})", loaded.source_model()));
    let report = score(&model, &args.data.inputs_label(), target, &preds)?;
    print!("{}", dir.write_reports(&[report], args.out.format.into())?);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if !args.checkpoint.exists() {
        return Err(missing_file(&args.checkpoint));
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let loaded = args.data.load()?;
    let target = loaded.get(args.split)?;
    if target.dims != ckpt.config.input_dims {
        bail!(schema(format!(
            "checkpoint expects input dims {:?}, embeddings have {:?}",
            ckpt.config.input_dims, target.dims
        )));
    }
    let workers = args.out.workers();
    let dir = RunDir::create(&args.out.out)?;
    let mut manifest = RunManifest::new("eval", &args.data, &loaded, workers);
    manifest.probe = Some(&ckpt.config);
    manifest.checkpoint = Some(&args.checkpoint);
    dir.write_json("run_manifest.json", &manifest)?;
    let preds = par::with_workers(workers, || trainer::predict_dataset(&ckpt.params, target))?;
    let report = score(
        &model_name(&args.out, &loaded),
        &args.data.inputs_label(),
        target,
        &preds,
    )?;
    print!("{}", dir.write_reports(&[report], args.out.format.into())?);
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        if !path.exists() {
            return Err(missing_file(path));
        }
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let r: EvalReport = serde_json::from_str(line)
                .map_err(|e| schema(format!("{}:{}: {e}", path.display(), i + 1)))?;
            reports.push(r);
        }
    }
    let rendered = metrics::report(&reports, args.format.into());
    match &args.out {
        Some(p) => fs::write(p, rendered).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pool(a) => cmd_pool(a),
        Command::Join(a) => cmd_join(a),
        Command::Train(a) => cmd_train(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = fail::classify(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(kind.exit_code())
        }
    }
}
