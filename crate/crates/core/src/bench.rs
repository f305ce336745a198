//! Benchmark harness: load the data, train each selected model, evaluate,
//! and write the report, curve, statistics and model files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::Architecture;
use crate::error::Error;
use crate::eval::{evaluate_linear, evaluate_stack, timed, ConfusionMatrix, EpochRecord};
use crate::mnist::{flatten_for_mlp, label_histogram, LabeledDataset, Mnist};
use crate::nn::{fit_with, Sequential, TrainConfig, TrainData};
use crate::svm::{train_ovr, SvmConfig};
use crate::tensor::Tensor;

/// Batch size used for evaluation passes; does not affect results.
const EVAL_BATCH: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Svm, ModelKind::Mlp, ModelKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        }
    }

    /// File name used by `--save-models`.
    pub fn model_file(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm.dsvm",
            ModelKind::Mlp => "mlp.dnet",
            ModelKind::Cnn => "cnn.dnet",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSelector {
    One(ModelKind),
    All,
}

impl ModelSelector {
    /// Models in training order; `all` is always svm, mlp, cnn.
    pub fn models(self) -> Vec<ModelKind> {
        match self {
            ModelSelector::One(kind) => vec![kind],
            ModelSelector::All => ModelKind::ALL.to_vec(),
        }
    }
}

impl FromStr for ModelSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ModelSelector::One(ModelKind::Svm)),
            "mlp" => Ok(ModelSelector::One(ModelKind::Mlp)),
            "cnn" => Ok(ModelSelector::One(ModelKind::Cnn)),
            "all" => Ok(ModelSelector::All),
            other => Err(format!("unknown model {other:?} (expected svm, mlp, cnn or all)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub models: ModelSelector,
    /// Epochs for the neural models. The SVM keeps its own pass count.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub report: PathBuf,
    pub curves_dir: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub save_models: Option<PathBuf>,
    /// Evaluation worker threads; 1 evaluates on the calling thread.
    pub parallel_eval: usize,
    /// Train on only the first `n` training images.
    pub train_limit: Option<usize>,
}

impl RunConfig {
    pub fn new(models: ModelSelector, data_dir: impl Into<PathBuf>, report: impl Into<PathBuf>) -> Self {
        RunConfig {
            models,
            epochs: 30,
            batch_size: 128,
            seed: 42,
            data_dir: data_dir.into(),
            report: report.into(),
            curves_dir: None,
            stats: None,
            save_models: None,
            parallel_eval: 1,
            train_limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.epochs == 0 || self.batch_size == 0 || self.parallel_eval == 0 {
            return Err(BenchError::Config(
                "epochs, batch size and parallel-eval must be at least 1".into(),
            ));
        }
        if self.train_limit == Some(0) {
            return Err(BenchError::Config("train limit must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let base = match kind {
            ModelKind::Cnn => TrainConfig::cnn(),
            _ => TrainConfig::mlp(),
        };
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..base
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            seed: self.seed,
            ..SvmConfig::default()
        }
    }
}

/// Effective hyperparameters of one run, after defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectiveConfig {
    Svm(SvmConfig),
    Network(TrainConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Training only; excludes loading and evaluation.
    pub train_seconds: f64,
    pub load_seconds: f64,
    pub eval_seconds: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Test-set confusion matrix.
    pub confusion_matrix: ConfusionMatrix,
    pub history: Vec<EpochRecord>,
    pub config: EffectiveConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
}

impl BenchReport {
    pub fn run(&self, kind: ModelKind) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.model == kind)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read dataset: {0}")]
    Data(#[source] Error),
    #[error("cannot write output: {0}")]
    Output(#[source] Error),
    #[error("training failed: {0}")]
    Training(#[source] Error),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Training(_) => 1,
            BenchError::Data(_) => 2,
            BenchError::Output(_) => 3,
        }
    }
}

/// Rounds an accuracy fraction to 3 decimal places in percent.
fn round_accuracy(a: f64) -> f64 {
    (a * 1e5).round() / 1e5
}

fn output_err(path: &Path, source: std::io::Error) -> BenchError {
    BenchError::Output(Error::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    fs::write(path, bytes).map_err(|e| output_err(path, e))
}

pub fn emit_report(report: &BenchReport, path: &Path) -> Result<(), BenchError> {
    if report.runs.is_empty() {
        return Err(BenchError::Config("refusing to write an empty report".into()));
    }
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write_file(path, json.as_bytes())
}

pub fn emit_curves(history: &[EpochRecord], path: &Path) -> Result<(), BenchError> {
    if history.is_empty() {
        return Err(BenchError::Config("no epochs to write".into()));
    }
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => output_err(path, io),
        other => BenchError::Output(Error::Format(format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for rec in history {
        w.serialize(rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

/// Parses a curves file written by [`emit_curves`].
pub fn read_curves(path: &Path) -> Result<Vec<EpochRecord>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::Data(Error::Format(e.to_string())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| BenchError::Data(Error::Format(e.to_string())))
}

pub fn emit_dataset_stats(ds: &LabeledDataset<f32>, path: &Path) -> Result<(), BenchError> {
    let mut out = String::from("label,count\n");
    for (label, count) in label_histogram(ds).iter().enumerate() {
        out.push_str(&format!("{label},{count}\n"));
    }
    write_file(path, out.as_bytes())
}

/// `stats.csv` → `stats.test.csv`.
pub fn test_stats_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.test.{}", ext.to_string_lossy()),
        None => format!("{stem}.test"),
    };
    path.with_file_name(name)
}

pub fn curves_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}_curves.csv", kind.name()))
}

/// Progress notifications from [`run`].
pub enum Event<'a> {
    Loaded { train: usize, test: usize, seconds: f64 },
    Training(ModelKind),
    Epoch(ModelKind, &'a EpochRecord),
    Finished(&'a RunRecord),
}

/// Fails early, before any training, if an output location is unusable.
fn preflight(cfg: &RunConfig) -> Result<(), BenchError> {
    for dir in [&cfg.curves_dir, &cfg.save_models].into_iter().flatten() {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    let files = [Some(&cfg.report), cfg.stats.as_ref()];
    for path in files.into_iter().flatten() {
        if path.is_dir() {
            return Err(output_err(
                path,
                std::io::Error::other("is a directory"),
            ));
        }
        let existed = path.exists();
        fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| output_err(path, e))?;
        if !existed {
            let _ = fs::remove_file(path);
        }
    }
    Ok(())
}

struct Trained {
    train_cm: ConfusionMatrix,
    test_cm: ConfusionMatrix,
    train_seconds: f64,
    eval_seconds: f64,
    history: Vec<EpochRecord>,
    model_bytes: Vec<u8>,
}

fn train_svm(cfg: &RunConfig, train: &Tensor<f32>, test: &Tensor<f32>, data: &Mnist<f32>) -> Result<Trained, BenchError> {
    let svm_cfg = cfg.svm_config();
    let (model, t) = timed("svm", || train_ovr(train, &data.train.labels, &svm_cfg));
    let model = model.map_err(BenchError::Training)?;
    let ((train_cm, test_cm), e) = timed("eval", || {
        (
            evaluate_linear(&model, train, &data.train.labels, cfg.parallel_eval),
            evaluate_linear(&model, test, &data.test.labels, cfg.parallel_eval),
        )
    });
    Ok(Trained {
        train_cm: train_cm.map_err(BenchError::Training)?,
        test_cm: test_cm.map_err(BenchError::Training)?,
        train_seconds: t.seconds,
        eval_seconds: e.seconds,
        history: Vec::new(),
        model_bytes: model.to_bytes(),
    })
}

fn train_network(
    kind: ModelKind,
    cfg: &RunConfig,
    inputs: (&Tensor<f32>, &Tensor<f32>),
    data: &Mnist<f32>,
    observer: &mut dyn FnMut(Event<'_>),
) -> Result<Trained, BenchError> {
    let arch = match kind {
        ModelKind::Cnn => Architecture::Cnn,
        _ => Architecture::Mlp,
    };
    let tc = cfg.train_config(kind);
    let mut net: Sequential<f32> = arch.build(cfg.seed).map_err(BenchError::Training)?;
    let train_data = TrainData::new(inputs.0, &data.train.one_hot, &data.train.labels).map_err(BenchError::Training)?;
    let (history, t) = timed(kind.name(), || {
        fit_with(&mut net, train_data, &tc, |rec| observer(Event::Epoch(kind, rec)))
    });
    let history = history.map_err(BenchError::Training)?;
    let ((train_cm, test_cm), e) = timed("eval", || {
        (
            evaluate_stack(&net, inputs.0, &data.train.labels, EVAL_BATCH, cfg.parallel_eval),
            evaluate_stack(&net, inputs.1, &data.test.labels, EVAL_BATCH, cfg.parallel_eval),
        )
    });
    Ok(Trained {
        train_cm: train_cm.map_err(BenchError::Training)?,
        test_cm: test_cm.map_err(BenchError::Training)?,
        train_seconds: t.seconds,
        eval_seconds: e.seconds,
        history,
        model_bytes: net.to_bytes(),
    })
}

/// Runs the whole benchmark, writing every requested artifact. The report
/// is rewritten after each model so a late failure keeps earlier results.
pub fn run(cfg: &RunConfig, observer: &mut dyn FnMut(Event<'_>)) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    preflight(cfg)?;

    let (data, load) = timed("load", || Mnist::<f32>::load_dir(&cfg.data_dir));
    let mut data = data.map_err(BenchError::Data)?;
    if let Some(limit) = cfg.train_limit {
        data.train = data.train.truncated(limit).map_err(|e| BenchError::Config(e.to_string()))?;
    }
    observer(Event::Loaded {
        train: data.train.len(),
        test: data.test.len(),
        seconds: load.seconds,
    });

    if let Some(path) = &cfg.stats {
        emit_dataset_stats(&data.train, path)?;
        emit_dataset_stats(&data.test, &test_stats_path(path))?;
    }

    let models = cfg.models.models();
    let flat = if models.iter().any(|&k| k != ModelKind::Cnn) {
        let train = flatten_for_mlp(&data.train).map_err(BenchError::Data)?;
        let test = flatten_for_mlp(&data.test).map_err(BenchError::Data)?;
        Some((train, test))
    } else {
        None
    };

    let mut report = BenchReport::default();
    for kind in models {
        observer(Event::Training(kind));
        let trained = match kind {
            ModelKind::Svm => {
                let (train, test) = flat.as_ref().expect("flattened inputs");
                train_svm(cfg, train, test, &data)?
            }
            ModelKind::Mlp => {
                let (train, test) = flat.as_ref().expect("flattened inputs");
                train_network(kind, cfg, (train, test), &data, observer)?
            }
            ModelKind::Cnn => train_network(kind, cfg, (&data.train.images, &data.test.images), &data, observer)?,
        };

        let (epochs, batch_size, config) = match kind {
            ModelKind::Svm => {
                let s = cfg.svm_config();
                (s.epochs, 1, EffectiveConfig::Svm(s))
            }
            _ => {
                let tc = cfg.train_config(kind);
                (tc.epochs, tc.batch_size, EffectiveConfig::Network(tc))
            }
        };
        let accuracy = |cm: &ConfusionMatrix| cm.accuracy().map(round_accuracy).map_err(BenchError::Training);
        let record = RunRecord {
            model: kind,
            train_accuracy: accuracy(&trained.train_cm)?,
            test_accuracy: accuracy(&trained.test_cm)?,
            train_seconds: trained.train_seconds,
            load_seconds: load.seconds,
            eval_seconds: trained.eval_seconds,
            epochs,
            batch_size,
            seed: cfg.seed,
            train_samples: data.train.len(),
            test_samples: data.test.len(),
            confusion_matrix: trained.test_cm,
            history: trained.history,
            config,
        };

        if let Some(dir) = &cfg.curves_dir {
            if !record.history.is_empty() {
                emit_curves(&record.history, &curves_path(dir, kind))?;
            }
        }
        if let Some(dir) = &cfg.save_models {
            write_file(&dir.join(kind.model_file()), &trained.model_bytes)?;
        }
        observer(Event::Finished(&record));
        report.runs.push(record);
        emit_report(&report, &cfg.report)?;
    }
    Ok(report)
}
