//! Minimal numerical layer: tensors, dense affine maps, LeakyReLU,
//! softmax cross-entropy, Glorot initialization, Adam and central-difference
//! gradient checking.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` when checking gradients.

mod adam;
mod gradcheck;
mod init;
mod layer;
pub mod linalg;
mod loss;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    finite_difference_grad, finite_difference_grad_piecewise, max_relative_error, max_relative_error_masked,
    relative_error,
};
pub use init::glorot_uniform_init;
pub use layer::{leaky_relu, leaky_relu_backward, DenseGrads, DenseLayer};
pub use loss::{softmax, softmax_cross_entropy, softmax_in_place};
pub(crate) use loss::xent_row as loss_row;
pub use tensor::Tensor;

/// Default LeakyReLU negative slope.
pub const DEFAULT_LEAKY_SLOPE: f32 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} elements")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
}

/// Floating-point element type usable by the numerical layer.
pub trait Real:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static
{
    /// Raw GEMM: `c ← alpha·a·b + beta·c` for an `m×k` times `k×n` product.
    ///
    /// # Safety
    /// Pointers and strides must describe in-bounds matrices and `c` must not
    /// alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// A fixed, ordered collection of parameter tensors.
///
/// The order returned by [`tensors`](Self::tensors) is the order in which
/// optimizers and gradient checkers visit coordinates.
pub trait ParamTensors<T: Real> {
    fn tensors(&self) -> Vec<&Tensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl<T: Real> ParamTensors<T> for Vec<Tensor<T>> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.iter_mut().collect()
    }
}
