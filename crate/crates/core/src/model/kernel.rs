//! Batched forward and backward passes.
//!
//! Rows are episodes for Memorizer tensors and `episode · q + query` for
//! Recaller tensors, so every layer is a single GEMM over the whole chunk.

use std::cell::Cell;

use rayon::prelude::*;

use super::params::ModelParams;
use super::{check_dim, argmax, Episode, MemoryVector, ModelConfig, ModelError};
use crate::nn::linalg::{gemm, MatMut, MatRef};
use crate::nn::{DenseLayer, Real};

/// Episodes per independently computed gradient chunk. Fixed so that the
/// reduction order never depends on the number of worker threads.
pub const CHUNK_EPISODES: usize = 128;

/// Counts of Memorizer steps and Recaller passes executed on this thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub memorize_steps: u64,
    pub recall_passes: u64,
}

thread_local! {
    static COUNTS: Cell<OpCounts> = const { Cell::new(OpCounts { memorize_steps: 0, recall_passes: 0 }) };
}

pub fn op_counts() -> OpCounts {
    COUNTS.with(Cell::get)
}

pub fn reset_op_counts() {
    COUNTS.with(|c| c.set(OpCounts::default()));
}

fn count(memorize: usize, recall: usize) {
    COUNTS.with(|c| {
        let mut v = c.get();
        v.memorize_steps += memorize as u64;
        v.recall_passes += recall as u64;
        c.set(v);
    });
}

fn activate<T: Real>(z: &[T], slope: T) -> Vec<T> {
    z.iter()
        .map(|&v| if v >= T::zero() { v } else { slope * v })
        .collect()
}

fn activate_backward<T: Real>(z: &[T], grad: &mut [T], slope: T) {
    for (g, &v) in grad.iter_mut().zip(z) {
        if v < T::zero() {
            *g = *g * slope;
        }
    }
}

fn affine<T: Real>(layer: &DenseLayer<T>, x: &[T], rows: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * layer.out_dim()];
    layer.forward_into(x, rows, &mut out);
    out
}

fn input_grad<T: Real>(layer: &DenseLayer<T>, up: &[T], rows: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * layer.in_dim()];
    layer.input_grad_into(up, rows, &mut dx, T::zero());
    dx
}

fn accumulate<T: Real>(layer: &DenseLayer<T>, grad: &mut DenseLayer<T>, x: &[T], up: &[T], rows: usize) {
    layer.accumulate_param_grads(x, up, rows, &mut grad.weight, &mut grad.bias);
}

pub(crate) struct StepOut<T> {
    pub z1: Vec<T>,
    pub z2: Vec<T>,
    pub sum_pq: Vec<T>,
    pub z3: Vec<T>,
    pub memory: Vec<T>,
}

/// One Memorizer step for `rows` independent memories.
pub(crate) fn step_forward<T: Real>(
    params: &ModelParams<T>,
    slope: T,
    input: &[T],
    memory: &[T],
    rows: usize,
) -> StepOut<T> {
    count(rows, 0);
    let z1 = affine(&params.memorizer_input, input, rows);
    let z2 = affine(&params.memorizer_recurrent, memory, rows);
    let sum_pq: Vec<T> = activate(&z1, slope)
        .into_iter()
        .zip(activate(&z2, slope))
        .map(|(p, q)| p + q)
        .collect();
    let z3 = affine(&params.memorizer_output, &sum_pq, rows);
    let memory = activate(&z3, slope);
    StepOut {
        z1,
        z2,
        sum_pq,
        z3,
        memory,
    }
}

pub(crate) struct RecallOut<T> {
    pub z4: Vec<T>,
    pub r: Vec<T>,
    pub z5: Vec<T>,
    pub s: Vec<T>,
    pub z6: Vec<T>,
    pub h6: Vec<T>,
    pub logits: Vec<T>,
}

fn combine_blocks<T: Real>(w6: &[T], hidden: usize) -> (MatRef<'_, T>, MatRef<'_, T>) {
    (
        MatRef::strided(w6, hidden, hidden, 2 * hidden),
        MatRef::strided(&w6[hidden..], hidden, hidden, 2 * hidden),
    )
}

/// Recaller over `episodes` memories, each queried `q` times.
pub(crate) fn recall_forward<T: Real>(
    params: &ModelParams<T>,
    slope: T,
    memory: &[T],
    episodes: usize,
    queries: &[T],
    q: usize,
) -> RecallOut<T> {
    let rows = episodes * q;
    count(0, rows);
    let hidden = params.recaller_query.out_dim();
    let z5 = affine(&params.recaller_memory, memory, episodes);
    let s = activate(&z5, slope);
    let z4 = affine(&params.recaller_query, queries, rows);
    let r = activate(&z4, slope);

    let (w6_r, w6_s) = combine_blocks(params.recaller_combine.weight.data(), hidden);
    let mut z6 = vec![T::zero(); rows * hidden];
    for row in z6.chunks_exact_mut(hidden) {
        row.copy_from_slice(params.recaller_combine.bias.data());
    }
    gemm(T::one(), MatRef::new(&r, rows, hidden), w6_r.t(), T::one(), MatMut::new(&mut z6, rows, hidden));
    let mut from_memory = vec![T::zero(); episodes * hidden];
    gemm(
        T::one(),
        MatRef::new(&s, episodes, hidden),
        w6_s.t(),
        T::zero(),
        MatMut::new(&mut from_memory, episodes, hidden),
    );
    for (e, shared) in from_memory.chunks_exact(hidden).enumerate() {
        for row in z6[e * q * hidden..(e + 1) * q * hidden].chunks_exact_mut(hidden) {
            for (z, &v) in row.iter_mut().zip(shared) {
                *z = *z + v;
            }
        }
    }
    let h6 = activate(&z6, slope);
    let logits = affine(&params.recaller_output, &h6, rows);
    RecallOut {
        z4,
        r,
        z5,
        s,
        z6,
        h6,
        logits,
    }
}

/// Forward-only results over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEval {
    /// Sum (not mean) of per-query cross-entropy.
    pub loss_sum: f64,
    pub correct: usize,
    /// Predicted class per query, episode-major.
    pub predictions: Vec<usize>,
}

/// Loss and accumulated gradients over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGrads<T = f32> {
    pub loss_sum: f64,
    pub correct: usize,
    pub grads: ModelParams<T>,
}

/// Episodes laid out as contiguous row-major matrices.
#[derive(Clone, Debug)]
pub struct PackedBatch<T = f32> {
    config: ModelConfig,
    episodes: usize,
    steps: usize,
    queries_per_episode: usize,
    /// Per step: `[episodes × (key_dim + value_dim)]`.
    inputs: Vec<Vec<T>>,
    m0: Vec<T>,
    /// `[episodes·q × query_dim]`.
    queries: Vec<T>,
    targets: Vec<usize>,
}

impl<T: Real> PackedBatch<T> {
    pub fn pack(config: &ModelConfig, episodes: &[Episode], m0: &[MemoryVector<T>]) -> Result<Self, ModelError> {
        config.validate()?;
        let first = episodes.first().ok_or(ModelError::EmptyEpisode)?;
        check_dim("initial memories", episodes.len(), m0.len())?;
        let (steps, q) = (first.len(), first.num_queries());
        if steps == 0 || q == 0 {
            return Err(ModelError::EmptyEpisode);
        }
        let b = episodes.len();
        let in_dim = config.memorizer_input_dim();
        let mut inputs = vec![Vec::with_capacity(b * in_dim); steps];
        let mut m0_flat = Vec::with_capacity(b * config.memory_dim);
        let mut queries = Vec::with_capacity(b * q * config.query_dim);
        let mut targets = Vec::with_capacity(b * q);
        for (ep, m) in episodes.iter().zip(m0) {
            if ep.len() != steps || ep.num_queries() != q || ep.keys.rows() != steps || ep.queries.rows() != q {
                return Err(ModelError::RaggedBatch);
            }
            check_dim("episode keys", config.key_dim, ep.keys.cols())?;
            check_dim("episode queries", config.query_dim, ep.queries.cols())?;
            check_dim("initial memory", config.memory_dim, m.dim())?;
            for (t, &v) in ep.values.iter().enumerate() {
                inputs[t].extend(ep.keys.row(t).iter().map(|&x| T::lit(x as f64)));
                inputs[t].push(T::lit(v as f64));
            }
            m0_flat.extend_from_slice(m.as_slice());
            queries.extend(ep.queries.data().iter().map(|&x| T::lit(x as f64)));
            for &t in &ep.targets {
                if t >= config.num_classes {
                    return Err(ModelError::ClassOutOfRange {
                        class: t,
                        classes: config.num_classes,
                    });
                }
                targets.push(t);
            }
        }
        Ok(Self {
            config: config.clone(),
            episodes: b,
            steps,
            queries_per_episode: q,
            inputs,
            m0: m0_flat,
            queries,
            targets,
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn total_queries(&self) -> usize {
        self.targets.len()
    }

    fn slope(&self) -> T {
        T::lit(self.config.leaky_slope as f64)
    }

    /// Final memories `[episodes × memory_dim]`.
    pub fn memorize(&self, params: &ModelParams<T>) -> Vec<T> {
        let mut memory = self.m0.clone();
        for input in &self.inputs {
            memory = step_forward(params, self.slope(), input, &memory, self.episodes).memory;
        }
        memory
    }

    /// Sign (`z >= 0`) of every LeakyReLU pre-activation in the forward pass,
    /// in a fixed order. Two parameter settings with equal patterns lie on the
    /// same linear piece of every activation.
    pub fn activation_pattern(&self, params: &ModelParams<T>) -> Vec<bool> {
        let slope = self.slope();
        let mut pattern = Vec::new();
        let mut push = |z: &[T]| pattern.extend(z.iter().map(|&v| v >= T::zero()));
        let mut memory = self.m0.clone();
        for input in &self.inputs {
            let out = step_forward(params, slope, input, &memory, self.episodes);
            push(&out.z1);
            push(&out.z2);
            push(&out.z3);
            memory = out.memory;
        }
        let rec = recall_forward(params, slope, &memory, self.episodes, &self.queries, self.queries_per_episode);
        push(&rec.z4);
        push(&rec.z5);
        push(&rec.z6);
        pattern
    }

    pub fn evaluate(&self, params: &ModelParams<T>) -> BatchEval {
        let memory = self.memorize(params);
        let rec = recall_forward(params, self.slope(), &memory, self.episodes, &self.queries, self.queries_per_episode);
        let classes = self.config.num_classes;
        let mut loss_sum = 0.0;
        let mut predictions = Vec::with_capacity(self.targets.len());
        let mut scratch = vec![T::zero(); classes];
        for (row, &target) in rec.logits.chunks_exact(classes).zip(&self.targets) {
            predictions.push(argmax(row));
            scratch.copy_from_slice(row);
            loss_sum += crate::nn::loss_row(&mut scratch, target).to_f64().unwrap();
        }
        let correct = predictions.iter().zip(&self.targets).filter(|(p, t)| p == t).count();
        BatchEval {
            loss_sum,
            correct,
            predictions,
        }
    }

    /// Sum of per-query losses and the gradient of `scale · Σ loss`,
    /// backpropagated through the Recaller and all Memorizer steps.
    pub fn loss_and_grads(&self, params: &ModelParams<T>, scale: T) -> BatchGrads<T> {
        let slope = self.slope();
        let (b, hidden, classes) = (self.episodes, self.config.hidden_dim, self.config.num_classes);
        let q = self.queries_per_episode;
        let rows = b * q;

        let mut memories = Vec::with_capacity(self.steps + 1);
        memories.push(self.m0.clone());
        let mut caches = Vec::with_capacity(self.steps);
        for input in &self.inputs {
            let mut out = step_forward(params, slope, input, memories.last().unwrap(), b);
            memories.push(std::mem::take(&mut out.memory));
            caches.push(out);
        }
        let final_memory = memories.last().unwrap();
        let rec = recall_forward(params, slope, final_memory, b, &self.queries, q);

        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut dlogits = rec.logits.clone();
        for (row, &target) in dlogits.chunks_exact_mut(classes).zip(&self.targets) {
            if argmax(row) == target {
                correct += 1;
            }
            loss_sum += crate::nn::loss_row(row, target).to_f64().unwrap();
            for g in row.iter_mut() {
                *g = *g * scale;
            }
        }

        let mut grads = ModelParams::zeros(&self.config);

        // Output layer.
        accumulate(&params.recaller_output, &mut grads.recaller_output, &rec.h6, &dlogits, rows);
        let mut dz6 = input_grad(&params.recaller_output, &dlogits, rows);
        activate_backward(&rec.z6, &mut dz6, slope);

        // Combine layer, split into the query block and the memory block.
        let g6 = &mut grads.recaller_combine;
        gemm(
            T::one(),
            MatRef::new(&dz6, rows, hidden).t(),
            MatRef::new(&rec.r, rows, hidden),
            T::one(),
            MatMut::strided(g6.weight.data_mut(), hidden, hidden, 2 * hidden),
        );
        let mut dz6_episode = vec![T::zero(); b * hidden];
        for (e, acc) in dz6_episode.chunks_exact_mut(hidden).enumerate() {
            for row in dz6[e * q * hidden..(e + 1) * q * hidden].chunks_exact(hidden) {
                for (a, &g) in acc.iter_mut().zip(row) {
                    *a = *a + g;
                }
            }
        }
        gemm(
            T::one(),
            MatRef::new(&dz6_episode, b, hidden).t(),
            MatRef::new(&rec.s, b, hidden),
            T::one(),
            MatMut::strided(&mut g6.weight.data_mut()[hidden..], hidden, hidden, 2 * hidden),
        );
        for (acc, g) in g6.bias.data_mut().iter_mut().zip(column_sums(&dz6_episode, hidden)) {
            *acc = *acc + g;
        }

        let (w6_r, w6_s) = combine_blocks(params.recaller_combine.weight.data(), hidden);
        let mut dz4 = vec![T::zero(); rows * hidden];
        gemm(T::one(), MatRef::new(&dz6, rows, hidden), w6_r, T::zero(), MatMut::new(&mut dz4, rows, hidden));
        activate_backward(&rec.z4, &mut dz4, slope);
        accumulate(&params.recaller_query, &mut grads.recaller_query, &self.queries, &dz4, rows);

        let mut dz5 = vec![T::zero(); b * hidden];
        gemm(
            T::one(),
            MatRef::new(&dz6_episode, b, hidden),
            w6_s,
            T::zero(),
            MatMut::new(&mut dz5, b, hidden),
        );
        activate_backward(&rec.z5, &mut dz5, slope);
        accumulate(&params.recaller_memory, &mut grads.recaller_memory, final_memory, &dz5, b);
        let mut dmemory = input_grad(&params.recaller_memory, &dz5, b);

        // Backpropagation through every Memorizer step; m0 is a constant.
        for t in (0..self.steps).rev() {
            let cache = &caches[t];
            let mut dz3 = dmemory;
            activate_backward(&cache.z3, &mut dz3, slope);
            accumulate(&params.memorizer_output, &mut grads.memorizer_output, &cache.sum_pq, &dz3, b);
            let dsum = input_grad(&params.memorizer_output, &dz3, b);

            let mut dz1 = dsum.clone();
            activate_backward(&cache.z1, &mut dz1, slope);
            accumulate(&params.memorizer_input, &mut grads.memorizer_input, &self.inputs[t], &dz1, b);

            let mut dz2 = dsum;
            activate_backward(&cache.z2, &mut dz2, slope);
            accumulate(&params.memorizer_recurrent, &mut grads.memorizer_recurrent, &memories[t], &dz2, b);

            dmemory = if t > 0 {
                input_grad(&params.memorizer_recurrent, &dz2, b)
            } else {
                Vec::new()
            };
        }

        BatchGrads {
            loss_sum,
            correct,
            grads,
        }
    }
}

fn column_sums<T: Real>(data: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for row in data.chunks_exact(cols) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o = *o + x;
        }
    }
    out
}

/// Gradient of the mean per-query loss over all `episodes`, computed in
/// fixed-size chunks (possibly in parallel) and reduced in chunk order.
pub fn batch_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    episodes: &[Episode],
    m0: &[MemoryVector<T>],
) -> Result<BatchGrads<T>, ModelError> {
    check_dim("initial memories", episodes.len(), m0.len())?;
    let total: usize = episodes.iter().map(Episode::num_queries).sum();
    if total == 0 {
        return Err(ModelError::EmptyEpisode);
    }
    let scale = T::one() / T::lit(total as f64);
    let parts: Vec<Result<BatchGrads<T>, ModelError>> = episodes
        .par_chunks(CHUNK_EPISODES)
        .zip(m0.par_chunks(CHUNK_EPISODES))
        .map(|(eps, ms)| Ok(PackedBatch::pack(config, eps, ms)?.loss_and_grads(params, scale)))
        .collect();
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("non-empty batch")?;
    for part in iter {
        let part = part?;
        acc.loss_sum += part.loss_sum;
        acc.correct += part.correct;
        acc.grads.add_assign(&part.grads);
    }
    Ok(acc)
}

/// Forward-only evaluation over all `episodes`, chunked like
/// [`batch_loss_and_grads`].
pub fn batch_evaluate<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    episodes: &[Episode],
    m0: &[MemoryVector<T>],
) -> Result<BatchEval, ModelError> {
    check_dim("initial memories", episodes.len(), m0.len())?;
    if episodes.is_empty() {
        return Err(ModelError::EmptyEpisode);
    }
    let parts: Vec<Result<BatchEval, ModelError>> = episodes
        .par_chunks(CHUNK_EPISODES)
        .zip(m0.par_chunks(CHUNK_EPISODES))
        .map(|(eps, ms)| Ok(PackedBatch::pack(config, eps, ms)?.evaluate(params)))
        .collect();
    let mut out = BatchEval {
        loss_sum: 0.0,
        correct: 0,
        predictions: Vec::new(),
    };
    for part in parts {
        let part = part?;
        out.loss_sum += part.loss_sum;
        out.correct += part.correct;
        out.predictions.extend(part.predictions);
    }
    Ok(out)
}
