use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::Rng;

use super::{ModelConfig, ModelError};
use crate::nn::{glorot_uniform_init, DenseLayer, ParamTensors, Real, Tensor};

/// All trainable weights of the Memorizer (layers 1–3) and Recaller (4–7).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    /// W1, b1: `[key, value]` → hidden.
    pub memorizer_input: DenseLayer<T>,
    /// W2, b2: previous memory → hidden.
    pub memorizer_recurrent: DenseLayer<T>,
    /// W3, b3: hidden → memory.
    pub memorizer_output: DenseLayer<T>,
    /// W4, b4: query → hidden.
    pub recaller_query: DenseLayer<T>,
    /// W5, b5: memory → hidden.
    pub recaller_memory: DenseLayer<T>,
    /// W6, b6: `[r, s]` → hidden. Columns `0..hidden` act on `r`.
    pub recaller_combine: DenseLayer<T>,
    /// W7, b7: hidden → class logits.
    pub recaller_output: DenseLayer<T>,
}

/// Serialized tensor names, in parameter order.
pub const TENSOR_NAMES: [&str; 14] = [
    "w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "w5", "b5", "w6", "b6", "w7", "b7",
];

impl<T: Real> ModelParams<T> {
    /// `(in_dim, out_dim)` of the seven layers.
    pub fn layer_dims(config: &ModelConfig) -> [(usize, usize); 7] {
        let h = config.hidden_dim;
        [
            (config.memorizer_input_dim(), h),
            (config.memory_dim, h),
            (h, config.memory_dim),
            (config.query_dim, h),
            (config.memory_dim, h),
            (2 * h, h),
            (h, config.num_classes),
        ]
    }

    /// Expected shape of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensor_shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
        Self::layer_dims(config)
            .iter()
            .flat_map(|&(i, o)| [vec![o, i], vec![o]])
            .collect()
    }

    fn from_layers(mut layers: Vec<DenseLayer<T>>) -> Self {
        assert_eq!(layers.len(), 7);
        let mut next = || layers.remove(0);
        Self {
            memorizer_input: next(),
            memorizer_recurrent: next(),
            memorizer_output: next(),
            recaller_query: next(),
            recaller_memory: next(),
            recaller_combine: next(),
            recaller_output: next(),
        }
    }

    /// Glorot-uniform weights and zero biases, drawn layer by layer.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let layers = Self::layer_dims(config)
            .iter()
            .map(|&(i, o)| DenseLayer {
                weight: glorot_uniform_init(i, o, rng),
                bias: Tensor::zeros(&[o]),
            })
            .collect();
        Ok(Self::from_layers(layers))
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self::from_layers(
            Self::layer_dims(config)
                .iter()
                .map(|&(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        )
    }

    /// Rebuilds parameters from tensors in [`TENSOR_NAMES`] order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        let shapes = Self::tensor_shapes(config);
        if tensors.len() != shapes.len() {
            return Err(ModelError::Dimension {
                what: "parameter tensor count",
                expected: shapes.len(),
                found: tensors.len(),
            });
        }
        for (t, s) in tensors.iter().zip(&shapes) {
            if t.shape() != s.as_slice() {
                return Err(crate::nn::NnError::ShapeMismatch {
                    expected: s.clone(),
                    found: t.shape().to_vec(),
                }
                .into());
            }
        }
        let mut it = tensors.into_iter();
        let layers = (0..7)
            .map(|_| DenseLayer {
                weight: it.next().unwrap(),
                bias: it.next().unwrap(),
            })
            .collect();
        Ok(Self::from_layers(layers))
    }

    pub fn layers(&self) -> [&DenseLayer<T>; 7] {
        [
            &self.memorizer_input,
            &self.memorizer_recurrent,
            &self.memorizer_output,
            &self.recaller_query,
            &self.recaller_memory,
            &self.recaller_combine,
            &self.recaller_output,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut DenseLayer<T>; 7] {
        [
            &mut self.memorizer_input,
            &mut self.memorizer_recurrent,
            &mut self.memorizer_output,
            &mut self.recaller_query,
            &mut self.recaller_memory,
            &mut self.recaller_combine,
            &mut self.recaller_output,
        ]
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams::from_layers(
            self.layers()
                .iter()
                .map(|l| DenseLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        )
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b).expect("same parameter layout");
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Hash over the exact bit patterns of every tensor.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for t in self.tensors() {
            for &d in t.shape() {
                h.write_usize(d);
            }
            for x in t.data() {
                h.write_u64(x.to_f64().unwrap().to_bits());
            }
        }
        h.finish()
    }
}

impl<T: Real> ParamTensors<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers()
            .into_iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
