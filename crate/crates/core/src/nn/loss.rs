use super::{NnError, Real, Tensor};

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

/// Softmax over the last dimension (each row of a batch independently).
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        softmax_in_place(row);
    }
    out
}

/// Cross-entropy of `softmax(logits)` against `target` and its gradient
/// with respect to the logits, `softmax(logits) − onehot(target)`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    target: usize,
) -> Result<(T, Tensor<T>), NnError> {
    if logits.shape().len() != 1 {
        return Err(NnError::InvalidShape(logits.shape().to_vec()));
    }
    let classes = logits.len();
    if target >= classes {
        return Err(NnError::TargetOutOfRange { target, classes });
    }
    let mut grad = logits.clone();
    let loss = xent_row(grad.data_mut(), target);
    Ok((loss, grad))
}

/// Overwrites `row` (logits) with `softmax − onehot(target)` and returns the
/// loss `logsumexp(row) − row[target]`.
pub(crate) fn xent_row<T: Real>(row: &mut [T], target: usize) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for &x in row.iter() {
        sum = sum + (x - max).exp();
    }
    let loss = (sum.ln() + max - row[target]).max(T::zero());
    for x in row.iter_mut() {
        *x = (*x - max).exp() / sum;
    }
    row[target] = row[target] - T::one();
    loss
}
