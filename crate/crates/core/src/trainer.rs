//! Training loops. An epoch is one full-batch Adam update.
//!
//! - `Standard`: one training set (and one validation set) generated from the
//!   seed and reused every epoch; stops on training accuracy.
//! - `Randomized`: a fresh training batch every epoch and a fresh validation
//!   batch at every evaluation; stops on validation accuracy.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::episodes::{gen_batch, stream_rng, Batch, BatchSeed, EpisodeError, Stream, Task, DEFAULT_BATCH_SIZE, NUM_VALUES};
use crate::model::{batch_evaluate, batch_loss_and_grads, ModelConfig, ModelError, ModelParams};
use crate::nn::{AdamConfig, AdamState, NnError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: u64, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("metrics I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Standard,
    Randomized,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Standard => "standard",
            TrainMode::Randomized => "randomized",
        })
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(TrainMode::Standard),
            "randomized" => Ok(TrainMode::Randomized),
            other => Err(format!("unknown mode `{other}` (expected standard or randomized)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopMetric {
    TrainAcc,
    ValAcc,
}

impl fmt::Display for StopMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopMetric::TrainAcc => "train_acc",
            StopMetric::ValAcc => "val_acc",
        })
    }
}

impl FromStr for StopMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train_acc" | "train-acc" | "train" => Ok(StopMetric::TrainAcc),
            "val_acc" | "val-acc" | "val" => Ok(StopMetric::ValAcc),
            other => Err(format!("unknown stop metric `{other}` (expected train_acc or val_acc)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub mode: TrainMode,
    pub n: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub key_dim: usize,
    pub lr: f64,
    pub leaky_slope: f32,
    pub stop_metric: StopMetric,
    pub stop_threshold: f64,
    pub max_epochs: u64,
    pub eval_every: u64,
    pub seed: u64,
}

pub const DEFAULT_MAX_EPOCHS: u64 = 500_000;

impl TrainConfig {
    /// Key–value task defaults for `mode`, stopping at accuracy 0.8.
    pub fn kv(mode: TrainMode, n: usize) -> Self {
        Self {
            task: Task::Kv,
            mode,
            n,
            batch_size: DEFAULT_BATCH_SIZE,
            hidden_dim: 256,
            key_dim: 16,
            lr: 0.001,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            stop_metric: match mode {
                TrainMode::Standard => StopMetric::TrainAcc,
                TrainMode::Randomized => StopMetric::ValAcc,
            },
            stop_threshold: 0.8,
            max_epochs: DEFAULT_MAX_EPOCHS,
            eval_every: 1,
            seed: 0,
        }
    }

    /// Sorting task defaults: randomized data, stop at validation accuracy 0.95.
    pub fn sort(n: usize) -> Self {
        Self {
            task: Task::Sort,
            key_dim: 1,
            stop_threshold: 0.95,
            ..Self::kv(TrainMode::Randomized, n)
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let query_dim = match self.task {
            Task::Kv => self.key_dim,
            Task::Sort => 1,
        };
        ModelConfig {
            key_dim: self.key_dim,
            value_dim: 1,
            query_dim,
            hidden_dim: self.hidden_dim,
            memory_dim: self.hidden_dim,
            num_classes: NUM_VALUES,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        let expected_metric = match self.mode {
            TrainMode::Standard => StopMetric::TrainAcc,
            TrainMode::Randomized => StopMetric::ValAcc,
        };
        if self.stop_metric != expected_metric {
            return Err(TrainError::InvalidConfig(format!(
                "{} mode stops on {expected_metric}, not {}",
                self.mode, self.stop_metric
            )));
        }
        if !(self.stop_threshold > 0.0 && self.stop_threshold <= 1.0) {
            return bad("stop threshold must lie in (0, 1]");
        }
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.task == Task::Sort && self.n > NUM_VALUES {
            return bad("sorting supports n <= 10");
        }
        if self.task == Task::Sort && self.key_dim != 1 {
            return bad("sorting uses scalar keys (key_dim = 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.eval_every == 0 {
            return bad("batch size, max epochs and eval interval must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        self.model_config().validate()?;
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// The batch this config draws on `stream` at `epoch`. Standard mode uses
    /// epoch 0 of the train and validation streams throughout.
    pub fn batch(&self, stream: Stream, epoch: u64) -> Result<Batch, TrainError> {
        let seed = BatchSeed {
            seed: self.seed,
            stream,
            epoch,
        };
        Ok(gen_batch(self.task, self.n, self.batch_size, &self.model_config(), seed)?)
    }

    /// Glorot-initialized parameters drawn from the seed's init stream.
    pub fn init_params(&self) -> Result<ModelParams, TrainError> {
        let mut rng = stream_rng(self.seed, Stream::Init, 0, 0);
        Ok(ModelParams::init(&self.model_config(), &mut rng)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: u64,
    pub loss: f64,
    pub train_acc: f64,
    /// `None` on epochs without an evaluation.
    pub val_acc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs_run: u64,
    pub final_train_acc: f64,
    pub final_val_acc: Option<f64>,
    pub stop_reason: StopReason,
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub train_acc: f64,
}

/// One Adam update on the gradient of the mean per-query loss over `batch`.
/// The returned loss and accuracy are measured before the update.
pub fn epoch_update(
    params: &mut ModelParams,
    opt: &mut AdamState,
    batch: &Batch,
    config: &ModelConfig,
) -> Result<EpochStats, TrainError> {
    let stats = measure(params, batch, config)?;
    apply(params, opt, stats.1)?;
    Ok(stats.0)
}

fn measure(
    params: &ModelParams,
    batch: &Batch,
    config: &ModelConfig,
) -> Result<(EpochStats, ModelParams), TrainError> {
    let out = batch_loss_and_grads(params, config, &batch.episodes, &batch.m0)?;
    let queries = batch.total_queries() as f64;
    Ok((
        EpochStats {
            loss: out.loss_sum / queries,
            train_acc: out.correct as f64 / queries,
        },
        out.grads,
    ))
}

fn apply(params: &mut ModelParams, opt: &mut AdamState, grads: ModelParams) -> Result<(), TrainError> {
    opt.step(params, &grads)?;
    Ok(())
}

/// Fraction of correct predictions over every query in `batch`.
pub fn evaluate(params: &ModelParams, batch: &Batch, config: &ModelConfig) -> Result<f64, TrainError> {
    let out = batch_evaluate(params, config, &batch.episodes, &batch.m0)?;
    Ok(out.correct as f64 / out.predictions.len() as f64)
}

pub fn train(config: &TrainConfig) -> Result<(ModelParams, TrainReport), TrainError> {
    train_with(config, |_| {})
}

/// Sorting-task training; `config.task` must be [`Task::Sort`].
pub fn train_sort(config: &TrainConfig) -> Result<(ModelParams, TrainReport), TrainError> {
    if config.task != Task::Sort {
        return Err(TrainError::InvalidConfig("train_sort needs task = sort".into()));
    }
    train(config)
}

/// [`train`], calling `observer` with every metric row as it is produced.
pub fn train_with(
    config: &TrainConfig,
    mut observer: impl FnMut(&MetricRow),
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    let model = config.model_config();
    let mut params = config.init_params()?;
    let mut opt = AdamState::new(config.adam(), &params);

    let fixed = match config.mode {
        TrainMode::Standard => Some((config.batch(Stream::Train, 0)?, config.batch(Stream::Validation, 0)?)),
        TrainMode::Randomized => None,
    };

    let mut rows = Vec::new();
    let mut last_val = None;
    for epoch in 1..=config.max_epochs {
        let fresh;
        let train_batch = match &fixed {
            Some((train, _)) => train,
            None => {
                fresh = config.batch(Stream::Train, epoch)?;
                &fresh
            }
        };
        let (stats, grads) = measure(&params, train_batch, &model)?;
        if !stats.loss.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                loss: stats.loss,
            });
        }

        let val_acc = if epoch % config.eval_every == 0 {
            let acc = match &fixed {
                Some((_, val)) => evaluate(&params, val, &model)?,
                None => evaluate(&params, &config.batch(Stream::Validation, epoch)?, &model)?,
            };
            last_val = Some(acc);
            Some(acc)
        } else {
            None
        };

        let row = MetricRow {
            epoch,
            loss: stats.loss,
            train_acc: stats.train_acc,
            val_acc,
        };
        observer(&row);
        rows.push(row);

        let metric = match config.stop_metric {
            StopMetric::TrainAcc => Some(stats.train_acc),
            StopMetric::ValAcc => val_acc,
        };
        if metric.is_some_and(|m| m >= config.stop_threshold) {
            let report = TrainReport {
                epochs_run: epoch,
                final_train_acc: stats.train_acc,
                final_val_acc: last_val,
                stop_reason: StopReason::Threshold,
                rows,
            };
            return Ok((params, report));
        }
        apply(&mut params, &mut opt, grads)?;
        if !params.all_finite() {
            return Err(TrainError::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
    }

    let last = rows.last().expect("max_epochs >= 1");
    let report = TrainReport {
        epochs_run: config.max_epochs,
        final_train_acc: last.train_acc,
        final_val_acc: last_val,
        stop_reason: StopReason::MaxEpochs,
        rows,
    };
    Ok((params, report))
}

pub const METRICS_HEADER: &str = "epoch,loss,train_acc,val_acc";

/// Decimal with nine significant digits.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn format_metric_row(row: &MetricRow) -> String {
    format!(
        "{},{},{},{}",
        row.epoch,
        format_decimal(row.loss),
        format_decimal(row.train_acc),
        row.val_acc.map(format_decimal).unwrap_or_default()
    )
}

/// Append-only metrics CSV, flushed after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &MetricRow) -> io::Result<()> {
        writeln!(self.out, "{}", format_metric_row(row))?;
        self.out.flush()
    }
}

/// Parses a metrics CSV back into rows.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err("missing metrics header".into());
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("bad row `{line}`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
            Ok(MetricRow {
                epoch: f[0].parse().map_err(|_| format!("bad epoch `{}`", f[0]))?,
                loss: num(f[1])?,
                train_acc: num(f[2])?,
                val_acc: if f[3].is_empty() { None } else { Some(num(f[3])?) },
            })
        })
        .collect()
}
