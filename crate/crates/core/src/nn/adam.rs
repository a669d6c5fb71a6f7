use super::{NnError, ParamTensors, Real, Tensor};

/// Adam hyperparameters. Defaults are the Keras/TensorFlow 2.x values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: ParamTensors<T> + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().into_iter().map(Tensor::zeros_like).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    /// One bias-corrected Adam update, visiting tensors in the parameter
    /// set's fixed order:
    ///
    /// `lr_t = lr·sqrt(1−β2^t)/(1−β1^t)`, `θ ← θ − lr_t·m/(sqrt(v)+ε)`.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<(), NnError>
    where
        P: ParamTensors<T> + ?Sized,
        G: ParamTensors<T> + ?Sized,
    {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || params.len() != self.first.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.first.len()],
                found: vec![grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: p.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let lr_t = T::lit(c.lr * (1.0 - c.beta2.powf(t)).sqrt() / (1.0 - c.beta1.powf(t)));
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.epsilon));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

        for (i, param) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, theta) in param.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                *theta = *theta - lr_t * m[j] / (v[j].sqrt() + eps);
            }
        }
        Ok(())
    }
}
