use super::linalg::{gemm, MatMut, MatRef};
use super::tensor::check_same_shape;
use super::{NnError, Real, Tensor};

/// Elementwise LeakyReLU: `x` for `x >= 0`, `slope·x` otherwise.
pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// Gradient of [`leaky_relu`]. The subgradient at exactly zero is 1.
pub fn leaky_relu_backward<T: Real>(
    x: &Tensor<T>,
    upstream: &Tensor<T>,
    slope: T,
) -> Result<Tensor<T>, NnError> {
    check_same_shape(x.shape(), upstream.shape())?;
    let mut out = upstream.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v < T::zero() {
            *g = *g * slope;
        }
    }
    Ok(out)
}

/// Affine map `y = W·x + b` with `W` stored `[out_dim × in_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T = f32> {
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
    pub dx: Tensor<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        if weight.shape().len() != 2 {
            return Err(NnError::InvalidShape(weight.shape().to_vec()));
        }
        check_same_shape(&[weight.shape()[0]], bias.shape())?;
        Ok(Self { weight, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn weight_ref(&self) -> MatRef<'_, T> {
        MatRef::new(self.weight.data(), self.out_dim(), self.in_dim())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        if x.shape().len() > 2 || x.cols() != self.in_dim() {
            let mut expected = x.shape().to_vec();
            *expected.last_mut().unwrap() = self.in_dim();
            return Err(NnError::ShapeMismatch {
                expected,
                found: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Applies the layer to a vector `[in]` or a batch `[rows × in]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let rows = x.rows();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_dim();
        let mut y = Tensor::zeros(&shape);
        self.forward_into(x.data(), rows, y.data_mut());
        Ok(y)
    }

    /// `out[rows × out_dim] ← x·Wᵀ + b`, with `x` row-major `[rows × in_dim]`.
    pub(crate) fn forward_into(&self, x: &[T], rows: usize, out: &mut [T]) {
        let out_dim = self.out_dim();
        for row in out.chunks_exact_mut(out_dim) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            MatRef::new(x, rows, self.in_dim()),
            self.weight_ref().t(),
            T::one(),
            MatMut::new(out, rows, out_dim),
        );
    }

    /// Gradients given the forward input `x` and `upstream = ∂L/∂y`.
    /// Weight and bias gradients are summed over the batch.
    pub fn backward(&self, x: &Tensor<T>, upstream: &Tensor<T>) -> Result<DenseGrads<T>, NnError> {
        self.check_input(x)?;
        let mut expected = x.shape().to_vec();
        *expected.last_mut().unwrap() = self.out_dim();
        check_same_shape(&expected, upstream.shape())?;
        let rows = x.rows();
        let mut grads = DenseGrads {
            dw: Tensor::zeros_like(&self.weight),
            db: Tensor::zeros_like(&self.bias),
            dx: Tensor::zeros_like(x),
        };
        self.accumulate_param_grads(x.data(), upstream.data(), rows, &mut grads.dw, &mut grads.db);
        self.input_grad_into(upstream.data(), rows, grads.dx.data_mut(), T::zero());
        Ok(grads)
    }

    /// `dw += upᵀ·x`, `db += Σ_rows up`.
    pub(crate) fn accumulate_param_grads(
        &self,
        x: &[T],
        up: &[T],
        rows: usize,
        dw: &mut Tensor<T>,
        db: &mut Tensor<T>,
    ) {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        gemm(
            T::one(),
            MatRef::new(up, rows, out_dim).t(),
            MatRef::new(x, rows, in_dim),
            T::one(),
            MatMut::new(dw.data_mut(), out_dim, in_dim),
        );
        let db = db.data_mut();
        for row in up.chunks_exact(out_dim) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
    }

    /// `dx ← up·W + beta·dx`.
    pub(crate) fn input_grad_into(&self, up: &[T], rows: usize, dx: &mut [T], beta: T) {
        gemm(
            T::one(),
            MatRef::new(up, rows, self.out_dim()),
            self.weight_ref(),
            beta,
            MatMut::new(dx, rows, self.in_dim()),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn leaky_relu_definition() {
        let y = leaky_relu(&Tensor::vector(vec![3.0f32]), 0.2);
        assert_eq!(y.data(), &[3.0]);
        let y = leaky_relu(&Tensor::vector(vec![-2.0f32]), 0.2);
        assert!((y.data()[0] + 0.4).abs() < 1e-7);
        let y = leaky_relu(&Tensor::vector(vec![0.0f32, -1.0, 1.0]), 0.5);
        assert_eq!(y.data(), &[0.0, -0.5, 1.0]);
    }

    #[test]
    fn leaky_relu_backward_cases() {
        let g = leaky_relu_backward(&Tensor::vector(vec![2.0f32]), &Tensor::vector(vec![1.0]), 0.2).unwrap();
        assert_eq!(g.data(), &[1.0]);
        let g = leaky_relu_backward(&Tensor::vector(vec![-2.0f32]), &Tensor::vector(vec![3.0]), 0.2).unwrap();
        assert!((g.data()[0] - 0.6).abs() < 1e-6);
        let g = leaky_relu_backward(&Tensor::vector(vec![0.0f32]), &Tensor::vector(vec![5.0]), 0.2).unwrap();
        assert_eq!(g.data(), &[5.0]);
        assert!(leaky_relu_backward(&Tensor::<f32>::zeros(&[2]), &Tensor::zeros(&[3]), 0.2).is_err());
    }

    #[test]
    fn dense_forward_hand_cases() {
        let id = DenseLayer::new(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(id.forward(&t(&[2], &[5.0, 7.0])).unwrap().data(), &[5.0, 7.0]);

        let sum = DenseLayer::new(t(&[1, 2], &[1.0, 1.0]), t(&[1], &[1.0])).unwrap();
        assert_eq!(sum.forward(&t(&[2], &[2.0, 3.0])).unwrap().data(), &[6.0]);

        let bias_only = DenseLayer::new(Tensor::zeros(&[1, 3]), t(&[1], &[4.5])).unwrap();
        assert_eq!(bias_only.forward(&t(&[3], &[9.0, -1.0, 2.0])).unwrap().data(), &[4.5]);
    }

    #[test]
    fn dense_forward_batch_and_mismatch() {
        let layer = DenseLayer::new(t(&[1, 2], &[1.0, 2.0]), t(&[1], &[0.5])).unwrap();
        let y = layer.forward(&t(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(y.shape(), &[3, 1]);
        assert_eq!(y.data(), &[1.5, 2.5, 3.5]);
        assert!(matches!(
            layer.forward(&t(&[3], &[1.0, 2.0, 3.0])),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn dense_backward_identity() {
        let id = DenseLayer::new(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), t(&[2], &[0.0, 0.0])).unwrap();
        let g = id.backward(&t(&[2], &[1.0, 2.0]), &t(&[2], &[1.0, 0.0])).unwrap();
        assert_eq!(g.dx.data(), &[1.0, 0.0]);
        assert_eq!(g.db.data(), &[1.0, 0.0]);
        assert_eq!(g.dw.data(), &[1.0, 2.0, 0.0, 0.0]);
    }
}
