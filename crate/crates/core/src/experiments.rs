//! Evaluation harness: test accuracy, capacity sweep, positional accuracy,
//! exact-match sorting and the standard-training overfitting control.
//!
//! Test episodes come from the seed's `Test` stream, keyed by the input
//! count, so every experiment is reproducible from `(params, seed)`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::episodes::{gen_batch, gen_sort_episode, rank_queries, Batch, BatchSeed, EpisodeError, Stream, Task};
use crate::model::{
    argmax, batch_evaluate, memorize_step, recall_logits, MemoryVector, ModelConfig, ModelError, ModelParams,
};
use crate::nn::Tensor;
use crate::trainer::{format_decimal, train, TrainConfig, TrainError, TrainMode};

pub const DEFAULT_TRIALS: usize = 1024;
pub const DEFAULT_CAPACITY_COUNTS: [usize; 12] = [2, 3, 4, 5, 6, 7, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("results I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    /// Input count, input position or training size, depending on the experiment.
    pub param: usize,
    pub accuracy: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub experiment: String,
    pub rows: Vec<SweepRow>,
}

fn test_batch(task: Task, config: &ModelConfig, n: usize, trials: usize, seed: u64) -> Result<Batch, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let seed = BatchSeed {
        seed,
        stream: Stream::Test,
        epoch: n as u64,
    };
    Ok(gen_batch(task, n, trials, config, seed)?)
}

/// Per-query correctness, episode-major, for `trials` fresh episodes.
fn query_hits(
    params: &ModelParams,
    config: &ModelConfig,
    task: Task,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<bool>, ExperimentError> {
    let batch = test_batch(task, config, n, trials, seed)?;
    let eval = batch_evaluate(params, config, &batch.episodes, &batch.m0)?;
    let targets = batch.episodes.iter().flat_map(|e| e.targets.iter().copied());
    Ok(eval.predictions.iter().zip(targets).map(|(&p, t)| p == t).collect())
}

fn mean(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

/// Memorize `n_inputs` fresh pairs, query every key, repeat `trials` times;
/// returns the fraction of correct recalls.
pub fn test_accuracy(
    params: &ModelParams,
    config: &ModelConfig,
    n_inputs: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    Ok(mean(&query_hits(params, config, Task::Kv, n_inputs, trials, seed)?))
}

/// [`test_accuracy`] for each input count.
pub fn capacity_sweep(
    params: &ModelParams,
    config: &ModelConfig,
    counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if counts.is_empty() {
        return Err(ExperimentError::Invalid("capacity sweep needs at least one count".into()));
    }
    let rows = counts
        .iter()
        .map(|&n| {
            Ok(SweepRow {
                param: n,
                accuracy: test_accuracy(params, config, n, trials, seed)?,
                trials,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(SweepResult {
        experiment: "capacity".into(),
        rows,
    })
}

/// Accuracy bucketed by input position, 1 = oldest, `n_inputs` = newest.
pub fn positional_accuracy(
    params: &ModelParams,
    config: &ModelConfig,
    n_inputs: usize,
    trials: usize,
    seed: u64,
) -> Result<SweepResult, ExperimentError> {
    let hits = query_hits(params, config, Task::Kv, n_inputs, trials, seed)?;
    let mut correct = vec![0usize; n_inputs];
    for episode in hits.chunks_exact(n_inputs) {
        for (pos, &hit) in episode.iter().enumerate() {
            correct[pos] += hit as usize;
        }
    }
    let rows = correct
        .iter()
        .enumerate()
        .map(|(pos, &c)| SweepRow {
            param: pos + 1,
            accuracy: c as f64 / trials as f64,
            trials,
        })
        .collect();
    Ok(SweepResult {
        experiment: "positional".into(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SortScore {
    /// Fraction of trials where every rank query was answered correctly.
    pub exact_match: f64,
    pub per_query: f64,
    pub trials: usize,
}

/// Exact-match sorting accuracy of a sort-task model over fresh `n`-number
/// episodes.
pub fn sort_exact_match(
    params: &ModelParams,
    config: &ModelConfig,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SortScore, ExperimentError> {
    let hits = query_hits(params, config, Task::Sort, n, trials, seed)?;
    let exact = hits.chunks_exact(n).filter(|ep| ep.iter().all(|&h| h)).count();
    Ok(SortScore {
        exact_match: exact as f64 / trials as f64,
        per_query: mean(&hits),
        trials,
    })
}

/// Output of [`sort_numbers`].
#[derive(Clone, Debug, PartialEq)]
pub struct SortedOutput {
    /// Tag recalled for each rank `0..n`.
    pub tags: Vec<usize>,
    /// The input number carrying each recalled tag, smallest rank first.
    pub numbers: Vec<f32>,
}

/// Sorts `numbers` with a trained sort-task model: number `i` is memorized
/// under tag `i`, then ranks `0..n` are queried. Each answer is the best
/// scoring tag among the `n` assigned ones, so the output only contains
/// input numbers (though a model error can repeat one and drop another).
/// Costs exactly `n` Memorizer steps and `n` Recaller passes.
pub fn sort_numbers(
    params: &ModelParams,
    config: &ModelConfig,
    numbers: &[f32],
    m0: &MemoryVector,
) -> Result<SortedOutput, ExperimentError> {
    let n = numbers.len();
    if n == 0 {
        return Err(EpisodeError::Empty.into());
    }
    if n > config.num_classes {
        return Err(ExperimentError::Invalid(format!(
            "cannot tag {n} numbers with {} classes",
            config.num_classes
        )));
    }
    let mut memory = m0.clone();
    for (tag, &x) in numbers.iter().enumerate() {
        memory = memorize_step(params, config, &memory, &Tensor::vector(vec![x]), &Tensor::vector(vec![tag as f32]))?;
    }
    let queries = rank_queries(n);
    let tags = (0..n)
        .map(|r| {
            let logits = recall_logits(params, config, &memory, &Tensor::vector(queries.row(r).to_vec()))?;
            Ok(argmax(&logits.data()[..n]))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let numbers = tags.iter().map(|&t| numbers[t]).collect();
    Ok(SortedOutput { tags, numbers })
}

/// Convenience for callers without their own generator: a fresh sort
/// episode of size `n` from the seed's test stream.
pub fn sample_sort_input(n: usize, seed: u64, index: u64) -> Result<Vec<f32>, ExperimentError> {
    let mut rng = crate::episodes::stream_rng(seed, Stream::Test, u64::MAX - 1, index);
    Ok(gen_sort_episode(n, &mut rng)?.keys)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverfitRow {
    pub n: usize,
    pub epochs: u64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub reached_threshold: bool,
}

/// Standard-mode training for each `n`, recording the epoch at which the
/// training accuracy reached the threshold and the validation accuracy of
/// the same parameters.
pub fn overfit_control(base: &TrainConfig, n_values: &[usize]) -> Result<Vec<OverfitRow>, ExperimentError> {
    if base.mode != TrainMode::Standard {
        return Err(ExperimentError::Invalid("overfit control runs standard-mode training".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let config = TrainConfig { n, ..base.clone() };
            let (params, report) = train(&config)?;
            let val = config.batch(Stream::Validation, 0)?;
            let val_acc = crate::trainer::evaluate(&params, &val, &config.model_config())?;
            Ok(OverfitRow {
                n,
                epochs: report.epochs_run,
                train_acc: report.final_train_acc,
                val_acc,
                reached_threshold: report.stop_reason == crate::trainer::StopReason::Threshold,
            })
        })
        .collect()
}

impl SweepResult {
    /// `param,accuracy,trials` rows after a `#` comment naming the
    /// experiment and checkpoint.
    pub fn to_csv(&self, checkpoint: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# experiment={} checkpoint={}", self.experiment, checkpoint).unwrap();
        writeln!(out, "param,accuracy,trials").unwrap();
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.param, format_decimal(r.accuracy), r.trials).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path, checkpoint: &str) -> io::Result<()> {
        std::fs::write(path, self.to_csv(checkpoint))
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let comment = lines.next().ok_or("empty results file")?;
        let experiment = comment
            .strip_prefix("# experiment=")
            .and_then(|rest| rest.split(' ').next())
            .ok_or("missing experiment comment")?
            .to_string();
        if lines.next() != Some("param,accuracy,trials") {
            return Err("missing results header".into());
        }
        let rows = lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                match f.as_slice() {
                    [p, a, t] => Ok(SweepRow {
                        param: p.parse().map_err(|_| format!("bad param `{p}`"))?,
                        accuracy: a.parse().map_err(|_| format!("bad accuracy `{a}`"))?,
                        trials: t.parse().map_err(|_| format!("bad trials `{t}`"))?,
                    }),
                    _ => Err(format!("bad row `{line}`")),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { experiment, rows })
    }

    /// Unweighted mean accuracy over rows.
    pub fn mean_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.accuracy).sum::<f64>() / self.rows.len() as f64
    }

    /// Population standard deviation of row accuracies.
    pub fn std_accuracy(&self) -> f64 {
        let m = self.mean_accuracy();
        (self.rows.iter().map(|r| (r.accuracy - m).powi(2)).sum::<f64>() / self.rows.len() as f64).sqrt()
    }
}
