//! Deployment-phase memory: sessions that append pairs and look values up
//! against frozen parameters, plus the binary checkpoint and memory files.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! "AMEM" | u32 version | u32 len | config block (UTF-8 key=value lines)
//! 14 × { u32 len | name | u32 rank | rank × u32 dim | f32 data }
//! ```
//!
//! Memory layout: `"AMV1" | u32 dim | u64 append_count | dim × f32`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::episodes::{sample_m0, Task};
use crate::model::{predict, recall_logits, memorize_step, MemoryVector, ModelConfig, ModelError, ModelParams, TENSOR_NAMES};
use crate::nn::{softmax, ParamTensors, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AMEM";
pub const MEMORY_MAGIC: &[u8; 4] = b"AMV1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("bad config block: {0}")]
    BadConfig(String),
    #[error("{0} trailing bytes after the last record")]
    TrailingData(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A trained model with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub task: Task,
    pub config: ModelConfig,
    /// Pairs per episode during training (the sort task's maximum input count).
    pub trained_n: usize,
    pub seed: u64,
    pub epochs_run: u64,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(task: Task, config: ModelConfig, trained_n: usize, seed: u64, epochs_run: u64, params: ModelParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            task,
            config,
            trained_n,
            seed,
            epochs_run,
            params,
        }
    }

    fn config_block(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        for (k, v) in [
            ("task", self.task.to_string()),
            ("key_dim", c.key_dim.to_string()),
            ("value_dim", c.value_dim.to_string()),
            ("query_dim", c.query_dim.to_string()),
            ("hidden_dim", c.hidden_dim.to_string()),
            ("memory_dim", c.memory_dim.to_string()),
            ("num_classes", c.num_classes.to_string()),
            ("leaky_slope", c.leaky_slope.to_string()),
            ("trained_n", self.trained_n.to_string()),
            ("seed", self.seed.to_string()),
            ("epochs_run", self.epochs_run.to_string()),
        ] {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_bytes(&mut out, self.config_block().as_bytes());
        for (name, t) in TENSOR_NAMES.iter().zip(self.params.tensors()) {
            put_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let len = r.u32()? as usize;
        let block = std::str::from_utf8(r.take(len)?).map_err(|e| StoreError::BadConfig(e.to_string()))?;
        let fields = parse_block(block)?;
        let task: Task = fields.get("task")?.parse().map_err(StoreError::BadConfig)?;
        let config = ModelConfig {
            key_dim: fields.num("key_dim")?,
            value_dim: fields.num("value_dim")?,
            query_dim: fields.num("query_dim")?,
            hidden_dim: fields.num("hidden_dim")?,
            memory_dim: fields.num("memory_dim")?,
            num_classes: fields.num("num_classes")?,
            leaky_slope: fields.num("leaky_slope")?,
        };
        config.validate().map_err(|e| StoreError::BadConfig(e.to_string()))?;
        let trained_n = fields.num("trained_n")?;
        let seed = fields.num("seed")?;
        let epochs_run = fields.num("epochs_run")?;

        let shapes = ModelParams::<f32>::tensor_shapes(&config);
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, expected) in TENSOR_NAMES.iter().zip(&shapes) {
            let len = r.u32()? as usize;
            let found = r.take(len)?;
            if found != name.as_bytes() {
                return Err(StoreError::ShapeMismatch(format!(
                    "expected tensor `{name}`, found `{}`",
                    String::from_utf8_lossy(found)
                )));
            }
            let rank = r.u32()? as usize;
            if rank != expected.len() {
                return Err(StoreError::ShapeMismatch(format!("{name}: rank {rank}, expected {}", expected.len())));
            }
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            if &shape != expected {
                return Err(StoreError::ShapeMismatch(format!("{name}: shape {shape:?}, expected {expected:?}")));
            }
            let count: usize = shape.iter().product();
            let data = r.f32s(count)?;
            tensors.push(Tensor::from_vec(shape, data).map_err(ModelError::from)?);
        }
        r.finish()?;
        let params = ModelParams::from_tensors(&config, tensors)?;
        Ok(Self {
            version,
            task,
            config,
            trained_n,
            seed,
            epochs_run,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), StoreError> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, StoreError> {
    Checkpoint::load(path)
}

/// A live memory vector bound to a frozen checkpoint.
#[derive(Clone, Debug)]
pub struct Session<'a> {
    checkpoint: &'a Checkpoint,
    memory: MemoryVector,
    append_count: u64,
}

/// Starts an empty session with `m0` drawn from `U[−1, 1]`, the training
/// distribution.
pub fn open_session<'a, R: Rng + ?Sized>(checkpoint: &'a Checkpoint, rng: &mut R) -> Session<'a> {
    Session {
        checkpoint,
        memory: sample_m0(checkpoint.config.memory_dim, rng),
        append_count: 0,
    }
}

impl<'a> Session<'a> {
    /// Resumes from an explicit memory vector.
    pub fn from_memory(checkpoint: &'a Checkpoint, memory: MemoryVector, append_count: u64) -> Result<Self, StoreError> {
        if memory.dim() != checkpoint.config.memory_dim {
            return Err(StoreError::ShapeMismatch(format!(
                "memory dimension {} does not match the checkpoint's {}",
                memory.dim(),
                checkpoint.config.memory_dim
            )));
        }
        Ok(Self {
            checkpoint,
            memory,
            append_count,
        })
    }

    pub fn checkpoint(&self) -> &'a Checkpoint {
        self.checkpoint
    }

    pub fn memory(&self) -> &MemoryVector {
        &self.memory
    }

    pub fn append_count(&self) -> u64 {
        self.append_count
    }

    /// Folds one pair into the memory. Appending past the trained size is
    /// allowed; recall quality degrades.
    pub fn append(&mut self, key: &[f32], value: usize) -> Result<(), StoreError> {
        let config = &self.checkpoint.config;
        if value >= config.num_classes {
            return Err(ModelError::ClassOutOfRange {
                class: value,
                classes: config.num_classes,
            }
            .into());
        }
        self.memory = memorize_step(
            &self.checkpoint.params,
            config,
            &self.memory,
            &Tensor::vector(key.to_vec()),
            &Tensor::vector(vec![value as f32]),
        )?;
        self.append_count += 1;
        Ok(())
    }

    /// Predicted class and its softmax distribution for `query`.
    pub fn lookup(&self, query: &[f32]) -> Result<(usize, Vec<f32>), StoreError> {
        let query = Tensor::vector(query.to_vec());
        let logits = recall_logits(&self.checkpoint.params, &self.checkpoint.config, &self.memory, &query)?;
        let class = predict(&self.checkpoint.params, &self.checkpoint.config, &self.memory, &query)?;
        Ok((class, softmax(&logits).into_data()))
    }

    pub fn memory_bytes(&self) -> Vec<u8> {
        let data = self.memory.as_slice();
        let mut out = Vec::with_capacity(16 + 4 * data.len());
        out.extend_from_slice(MEMORY_MAGIC);
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.append_count.to_le_bytes());
        for &x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_memory_bytes(bytes: &[u8], checkpoint: &'a Checkpoint) -> Result<Self, StoreError> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(MEMORY_MAGIC)?;
        let dim = r.u32()? as usize;
        if dim != checkpoint.config.memory_dim {
            return Err(StoreError::ShapeMismatch(format!(
                "memory dimension {dim} does not match the checkpoint's {}",
                checkpoint.config.memory_dim
            )));
        }
        let append_count = r.u64()?;
        let data = r.f32s(dim)?;
        r.finish()?;
        Self::from_memory(checkpoint, MemoryVector::new(data), append_count)
    }
}

pub fn save_memory(path: &Path, session: &Session) -> Result<(), StoreError> {
    Ok(std::fs::write(path, session.memory_bytes())?)
}

pub fn load_memory<'a>(path: &Path, checkpoint: &'a Checkpoint) -> Result<Session<'a>, StoreError> {
    Session::from_memory_bytes(&std::fs::read(path)?, checkpoint)
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8], StoreError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(StoreError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), StoreError> {
        let available = self.bytes.len().min(4);
        let found = &self.bytes[..available];
        if found != expected {
            return Err(StoreError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>, StoreError> {
        let bytes = self.take(count.checked_mul(4).ok_or(StoreError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
            available: self.bytes.len() - self.pos,
        })?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<(), StoreError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            extra => Err(StoreError::TrailingData(extra)),
        }
    }
}

struct Fields<'s>(Vec<(&'s str, &'s str)>);

fn parse_block(block: &str) -> Result<Fields<'_>, StoreError> {
    block
        .lines()
        .map(|line| {
            line.split_once('=')
                .ok_or_else(|| StoreError::BadConfig(format!("line `{line}` is not key=value")))
        })
        .collect::<Result<_, _>>()
        .map(Fields)
}

impl<'s> Fields<'s> {
    fn get(&self, key: &str) -> Result<&'s str, StoreError> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| StoreError::BadConfig(format!("missing `{key}`")))
    }

    fn num<N: std::str::FromStr>(&self, key: &str) -> Result<N, StoreError> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| StoreError::BadConfig(format!("`{key}` has invalid value `{v}`")))
    }
}
