//! The Memorizer recurrent cell and the Recaller head.
//!
//! Memorizer, one append of `(key, value)` onto memory `m`:
//!
//! ```text
//! u = [key, value]
//! p = σ(W1·u + b1)
//! q = σ(W2·m + b2)
//! m' = σ(W3·(p + q) + b3)
//! ```
//!
//! Recaller, one query against memory `m`:
//!
//! ```text
//! r = σ(W4·query + b4)
//! s = σ(W5·m + b5)
//! h = σ(W6·[r, s] + b6)
//! logits = W7·h + b7
//! ```
//!
//! `σ` is LeakyReLU. Softmax is left to the loss and to callers.

pub mod gradcheck;
mod kernel;
mod params;

use thiserror::Error;

use crate::nn::{NnError, Real, Tensor, DEFAULT_LEAKY_SLOPE};

pub use kernel::{
    batch_evaluate, batch_loss_and_grads, op_counts, reset_op_counts, BatchEval, BatchGrads, OpCounts,
    PackedBatch, CHUNK_EPISODES,
};
pub use params::{ModelParams, TENSOR_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("episode has no key-value pairs")]
    EmptyEpisode,
    #[error("episodes in a batch must share pair and query counts")]
    RaggedBatch,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Layer sizes of a Memorizer–Recaller pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub key_dim: usize,
    pub value_dim: usize,
    pub query_dim: usize,
    pub hidden_dim: usize,
    pub memory_dim: usize,
    pub num_classes: usize,
    pub leaky_slope: f32,
}

impl ModelConfig {
    /// Key-value task: 16-dim keys queried by the keys themselves.
    pub fn kv() -> Self {
        Self {
            key_dim: 16,
            value_dim: 1,
            query_dim: 16,
            hidden_dim: 256,
            memory_dim: 256,
            num_classes: 10,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Sorting task: scalar keys, queried by scalar rank.
    pub fn sort() -> Self {
        Self {
            key_dim: 1,
            query_dim: 1,
            ..Self::kv()
        }
    }

    /// Sets both the hidden and the memory width.
    pub fn with_hidden(mut self, width: usize) -> Self {
        self.hidden_dim = width;
        self.memory_dim = width;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("key_dim", self.key_dim),
            ("query_dim", self.query_dim),
            ("hidden_dim", self.hidden_dim),
            ("memory_dim", self.memory_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.value_dim != 1 {
            return Err(ModelError::InvalidConfig(
                "value_dim must be 1 (values enter as a scalar)".into(),
            ));
        }
        if self.hidden_dim != self.memory_dim {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_dim ({}) must equal memory_dim ({}): p and q are summed elementwise",
                self.hidden_dim, self.memory_dim
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::InvalidConfig("num_classes must be >= 2".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(ModelError::InvalidConfig("leaky_slope must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn memorizer_input_dim(&self) -> usize {
        self.key_dim + self.value_dim
    }
}

/// The Appendable Memory: a fixed-width vector rewritten on every append.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryVector<T = f32>(Tensor<T>);

impl<T: Real> MemoryVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(Tensor::vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        self.0.data()
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn cast<U: Real>(&self) -> MemoryVector<U> {
        MemoryVector(self.0.cast())
    }
}

/// One training or evaluation sample in model form: `n` pairs to memorize
/// and `q` queries with their target classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `[n × key_dim]`
    pub keys: Tensor<f32>,
    pub values: Vec<usize>,
    /// `[q × query_dim]`
    pub queries: Tensor<f32>,
    pub targets: Vec<usize>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.targets.len()
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Folds one `(key, value)` pair into the memory.
pub fn memorize_step<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    memory: &MemoryVector<T>,
    key: &Tensor<T>,
    value: &Tensor<T>,
) -> Result<MemoryVector<T>, ModelError> {
    check_dim("key", config.key_dim, key.len())?;
    check_dim("value", config.value_dim, value.len())?;
    check_dim("memory", config.memory_dim, memory.dim())?;
    let mut input = Vec::with_capacity(config.memorizer_input_dim());
    input.extend_from_slice(key.data());
    input.extend_from_slice(value.data());
    let step = kernel::step_forward(params, T::lit(config.leaky_slope as f64), &input, memory.as_slice(), 1);
    Ok(MemoryVector::new(step.memory))
}

/// Folds every pair of `episode`, in order, into `m0` and returns `m_N`.
pub fn memorize_all<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    episode: &Episode,
    m0: &MemoryVector<T>,
) -> Result<MemoryVector<T>, ModelError> {
    if episode.is_empty() {
        return Err(ModelError::EmptyEpisode);
    }
    check_dim("episode keys", config.key_dim, episode.keys.cols())?;
    let mut memory = m0.clone();
    for (i, &v) in episode.values.iter().enumerate() {
        let key = Tensor::vector(episode.keys.row(i).iter().map(|&x| T::lit(x as f64)).collect());
        let value = Tensor::vector(vec![T::lit(v as f64)]);
        memory = memorize_step(params, config, &memory, &key, &value)?;
    }
    Ok(memory)
}

/// Pre-softmax class scores for `query` against `memory`.
pub fn recall_logits<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    memory: &MemoryVector<T>,
    query: &Tensor<T>,
) -> Result<Tensor<T>, ModelError> {
    check_dim("query", config.query_dim, query.len())?;
    check_dim("memory", config.memory_dim, memory.dim())?;
    let out = kernel::recall_forward(
        params,
        T::lit(config.leaky_slope as f64),
        memory.as_slice(),
        1,
        query.data(),
        1,
    );
    Ok(Tensor::vector(out.logits))
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax<T: Real>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for `query`.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    memory: &MemoryVector<T>,
    query: &Tensor<T>,
) -> Result<usize, ModelError> {
    Ok(argmax(recall_logits(params, config, memory, query)?.data()))
}

/// Loss of one episode, averaged over its queries, with gradients through
/// the Recaller and every Memorizer step. `m0` receives no gradient.
///
/// Returns `(loss, grads, accuracy)`.
pub fn episode_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    episode: &Episode,
    m0: &MemoryVector<T>,
) -> Result<(f64, ModelParams<T>, f64), ModelError> {
    let packed = PackedBatch::pack(config, std::slice::from_ref(episode), std::slice::from_ref(m0))?;
    let queries = packed.total_queries();
    let out = packed.loss_and_grads(params, T::one() / T::lit(queries as f64));
    Ok((
        out.loss_sum / queries as f64,
        out.grads,
        out.correct as f64 / queries as f64,
    ))
}

/// Mean episode loss without gradients (the scalar differentiated by
/// [`episode_loss_and_grads`]).
pub fn episode_loss<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    episode: &Episode,
    m0: &MemoryVector<T>,
) -> Result<f64, ModelError> {
    let packed = PackedBatch::pack(config, std::slice::from_ref(episode), std::slice::from_ref(m0))?;
    let eval = packed.evaluate(params);
    Ok(eval.loss_sum / packed.total_queries() as f64)
}

#[cfg(test)]
mod tests;
