//! Finite-difference verification of the analytic BPTT gradients on tiny
//! models, run in double precision.

use rand::Rng;

use super::{episode_loss_and_grads, Episode, MemoryVector, ModelConfig, ModelError, ModelParams, PackedBatch};
use crate::episodes::{gen_kv_episode, stream_rng, Stream};
use crate::nn::{finite_difference_grad_piecewise, max_relative_error_masked, ParamTensors};

/// Central-difference step. In double precision this keeps roundoff near
/// 1e-11 while the O(eps²) truncation error stays far below the tolerance
/// even for gradients close to the 1e-6 relative-error floor.
pub const DEFAULT_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;

/// Hidden = memory = 8, 4-dim keys and queries, 10 classes.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        key_dim: 4,
        query_dim: 4,
        ..ModelConfig::kv().with_hidden(8)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceReport {
    pub n: usize,
    pub max_rel_err: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates whose probes crossed a LeakyReLU kink and were not compared.
    pub kinked: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub eps: f64,
    pub instances: Vec<InstanceReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.instances.iter().map(|i| i.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.instances.iter().map(|i| i.checked).sum()
    }

    pub fn kinked(&self) -> usize {
        self.instances.iter().map(|i| i.kinked).sum()
    }

    pub fn passed(&self) -> bool {
        !self.instances.is_empty() && self.checked() > 0 && self.max_rel_err() < TOLERANCE
    }
}

/// Compares analytic and central-difference gradients for one episode.
pub fn check_episode(
    params: &ModelParams<f64>,
    config: &ModelConfig,
    episode: &Episode,
    m0: &MemoryVector<f64>,
    eps: f64,
) -> Result<InstanceReport, ModelError> {
    let (_, analytic, _) = episode_loss_and_grads(params, config, episode, m0)?;
    let packed = PackedBatch::pack(config, std::slice::from_ref(episode), std::slice::from_ref(m0))?;
    let queries = packed.total_queries() as f64;
    let (numeric, mask) = finite_difference_grad_piecewise(
        |p: &ModelParams<f64>| (packed.evaluate(p).loss_sum / queries, packed.activation_pattern(p)),
        params,
        eps,
    );
    let checked = mask.iter().flatten().filter(|&&ok| ok).count();
    Ok(InstanceReport {
        n: episode.len(),
        max_rel_err: max_relative_error_masked(&analytic, &numeric, &mask),
        checked,
        kinked: params.num_scalars() - checked,
    })
}

/// Random tiny instance `index`: Glorot weights, biases in `U(−0.3, 0.3)`,
/// `N = 1 + index % 3` pairs.
pub fn random_instance(seed: u64, index: u64) -> (ModelParams<f64>, Episode, MemoryVector<f64>) {
    let config = tiny_config();
    let mut rng = stream_rng(seed, Stream::Test, u64::MAX, index);
    let mut params = ModelParams::<f32>::init(&config, &mut rng)
        .expect("valid tiny config")
        .cast::<f64>();
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            for b in t.data_mut() {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let n = 1 + (index % 3) as usize;
    let episode = gen_kv_episode(n, config.key_dim, &mut rng).to_episode();
    let m0 = crate::episodes::sample_m0(config.memory_dim, &mut rng).cast();
    (params, episode, m0)
}

/// Runs [`check_episode`] on `trials` random tiny instances.
pub fn run_gradcheck(trials: usize, eps: f64, seed: u64) -> Result<GradCheckReport, ModelError> {
    let config = tiny_config();
    let instances = (0..trials as u64)
        .map(|i| {
            let (params, episode, m0) = random_instance(seed, i);
            check_episode(&params, &config, &episode, &m0, eps)
        })
        .collect::<Result<_, _>>()?;
    Ok(GradCheckReport { eps, instances })
}
