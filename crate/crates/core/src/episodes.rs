//! Seeded generation of key–value episodes, sorting episodes, initial
//! memories and batches.
//!
//! Every episode draws from its own ChaCha8 generator keyed by a SplitMix64
//! hash chain of `(seed, stream, epoch, index)`, so episode `i` of a batch is
//! the same whatever the batch size or thread count.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Episode, MemoryVector, ModelConfig};
use crate::nn::Tensor;

/// Keys are drawn from `[0, KEY_MAX)` in the key–value task.
pub const KEY_MAX: f32 = 9.0;
/// Values are the classes `0..NUM_VALUES`.
pub const NUM_VALUES: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("episode needs at least one pair")]
    Empty,
    #[error("sorting needs distinct values: n = {0} exceeds {NUM_VALUES}")]
    TooManyToSort(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Kv,
    Sort,
}

impl Task {
    pub fn model_config(self) -> ModelConfig {
        match self {
            Task::Kv => ModelConfig::kv(),
            Task::Sort => ModelConfig::sort(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Kv => "kv",
            Task::Sort => "sort",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kv" => Ok(Task::Kv),
            "sort" => Ok(Task::Sort),
            other => Err(format!("unknown task `{other}` (expected kv or sort)")),
        }
    }
}

/// Independent random streams derived from one experiment seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    Train,
    Validation,
    Test,
    Session,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Train => 2,
            Stream::Validation => 3,
            Stream::Test => 4,
            Stream::Session => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for item `index` of `epoch` on `stream`.
pub fn stream_rng(seed: u64, stream: Stream, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [stream.id(), epoch, index] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Key–value sample: `n` keys with i.i.d. `U[0, 9)` elements and i.i.d.
/// uniform values in `0..10`.
#[derive(Clone, Debug, PartialEq)]
pub struct KvEpisode {
    /// `[n × key_dim]`
    pub keys: Tensor<f32>,
    pub values: Vec<usize>,
}

impl KvEpisode {
    /// Every key is queried, in memorization order.
    pub fn to_episode(&self) -> Episode {
        Episode {
            keys: self.keys.clone(),
            values: self.values.clone(),
            queries: self.keys.clone(),
            targets: self.values.clone(),
        }
    }
}

pub fn gen_kv_episode<R: Rng + ?Sized>(n: usize, key_dim: usize, rng: &mut R) -> KvEpisode {
    assert!(n >= 1 && key_dim >= 1, "n and key_dim must be positive");
    let key_dist = Uniform::new(0.0f32, KEY_MAX);
    let value_dist = Uniform::new(0, NUM_VALUES);
    let mut keys = Vec::with_capacity(n * key_dim);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        keys.extend((0..key_dim).map(|_| key_dist.sample(rng)));
        values.push(value_dist.sample(rng));
    }
    KvEpisode {
        keys: Tensor::from_vec(vec![n, key_dim], keys).expect("n × key_dim keys"),
        values,
    }
}

/// Sorting sample: `n` scalar keys from `U[0, n)` tagged with distinct values.
#[derive(Clone, Debug, PartialEq)]
pub struct SortEpisode {
    pub keys: Vec<f32>,
    pub values: Vec<usize>,
}

impl SortEpisode {
    /// Pair indices ordered by ascending key (stable on ties).
    pub fn rank_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.keys.len()).collect();
        order.sort_by(|&a, &b| self.keys[a].total_cmp(&self.keys[b]));
        order
    }

    /// Target for rank query `r`: the value paired with the `r`-th smallest key.
    pub fn targets(&self) -> Vec<usize> {
        self.rank_order().into_iter().map(|i| self.values[i]).collect()
    }

    pub fn to_episode(&self) -> Episode {
        let n = self.keys.len();
        Episode {
            keys: Tensor::from_vec(vec![n, 1], self.keys.clone()).expect("n keys"),
            values: self.values.clone(),
            queries: rank_queries(n),
            targets: self.targets(),
        }
    }
}

/// The rank prompts `0, 1, …, n−1` as an `[n × 1]` query matrix.
pub fn rank_queries(n: usize) -> Tensor<f32> {
    Tensor::from_vec(vec![n, 1], (0..n).map(|r| r as f32).collect()).expect("n queries")
}

pub fn gen_sort_episode<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SortEpisode, EpisodeError> {
    if n == 0 {
        return Err(EpisodeError::Empty);
    }
    if n > NUM_VALUES {
        return Err(EpisodeError::TooManyToSort(n));
    }
    let key_dist = Uniform::new(0.0f32, n as f32);
    let keys = (0..n).map(|_| key_dist.sample(rng)).collect();
    let values = sample(rng, NUM_VALUES, n).into_vec();
    Ok(SortEpisode { keys, values })
}

/// Initial memory with i.i.d. `U[−1, 1]` entries.
pub fn sample_m0<R: Rng + ?Sized>(memory_dim: usize, rng: &mut R) -> MemoryVector<f32> {
    let dist = Uniform::new_inclusive(-1.0f32, 1.0);
    MemoryVector::new((0..memory_dim).map(|_| dist.sample(rng)).collect())
}

/// Episodes sharing `n` and dimensions, each with its own initial memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub task: Task,
    pub episodes: Vec<Episode>,
    pub m0: Vec<MemoryVector<f32>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn total_queries(&self) -> usize {
        self.episodes.iter().map(Episode::num_queries).sum()
    }
}

/// Where a batch's randomness comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSeed {
    pub seed: u64,
    pub stream: Stream,
    pub epoch: u64,
}

/// Draws one episode and its initial memory from `rng`.
pub fn gen_episode<R: Rng + ?Sized>(
    task: Task,
    n: usize,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<(Episode, MemoryVector<f32>), EpisodeError> {
    if n == 0 {
        return Err(EpisodeError::Empty);
    }
    let episode = match task {
        Task::Kv => gen_kv_episode(n, config.key_dim, rng).to_episode(),
        Task::Sort => gen_sort_episode(n, rng)?.to_episode(),
    };
    Ok((episode, sample_m0(config.memory_dim, rng)))
}

pub fn gen_batch(
    task: Task,
    n: usize,
    batch_size: usize,
    config: &ModelConfig,
    seed: BatchSeed,
) -> Result<Batch, EpisodeError> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut episodes = Vec::with_capacity(batch_size);
    let mut m0 = Vec::with_capacity(batch_size);
    for i in 0..batch_size {
        let mut rng = stream_rng(seed.seed, seed.stream, seed.epoch, i as u64);
        let (ep, m) = gen_episode(task, n, config, &mut rng)?;
        episodes.push(ep);
        m0.push(m);
    }
    Ok(Batch { task, episodes, m0 })
}

/// Formats one `key_csv<TAB>value` line.
pub fn format_pair(key: &[f32], value: usize) -> String {
    let key: Vec<String> = key.iter().map(|x| x.to_string()).collect();
    format!("{}\t{}", key.join(","), value)
}

/// One line per memorized pair, in order.
pub fn dump_episode(episode: &Episode) -> String {
    let mut out = String::new();
    for (i, &v) in episode.values.iter().enumerate() {
        out.push_str(&format_pair(episode.keys.row(i), v));
        out.push('\n');
    }
    out
}

/// Parses a comma-separated key.
pub fn parse_key(text: &str) -> Result<Vec<f32>, String> {
    text.split(',')
        .map(|field| {
            let field = field.trim();
            field
                .parse::<f32>()
                .map_err(|_| format!("bad number `{field}`"))
                .and_then(|x| if x.is_finite() { Ok(x) } else { Err(format!("non-finite number `{field}`")) })
        })
        .collect()
}

/// Parses `key_csv<TAB>value` lines; blank lines are skipped. Line numbers
/// in errors are 1-based.
pub fn parse_pairs(text: &str) -> Result<Vec<(Vec<f32>, usize)>, EpisodeError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EpisodeError::Parse {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `key_csv<TAB>value`".into()))?;
        let key = parse_key(key).map_err(err)?;
        let value = value
            .trim()
            .parse::<usize>()
            .map_err(|_| err(format!("bad value `{}`", value.trim())))?;
        pairs.push((key, value));
    }
    Ok(pairs)
}
