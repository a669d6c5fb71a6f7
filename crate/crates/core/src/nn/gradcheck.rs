use super::{ParamTensors, Real};

/// Central-difference gradient of `loss_fn` at `params`:
/// `(L(θ + eps·e) − L(θ − eps·e)) / (2·eps)` for every scalar coordinate,
/// where `2·eps` is taken as the difference of the rounded perturbed values.
pub fn finite_difference_grad<T, P, F>(mut loss_fn: F, params: &P, eps: f64) -> P
where
    T: Real,
    P: ParamTensors<T> + Clone,
    F: FnMut(&P) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut probe = params.clone();
    let mut grads = params.clone();
    let num_tensors = params.tensors().len();
    for ti in 0..num_tensors {
        let len = params.tensors()[ti].len();
        for j in 0..len {
            let original = probe.tensors()[ti].data()[j];
            let up = original + T::lit(eps);
            let down = original - T::lit(eps);
            probe.tensors_mut()[ti].data_mut()[j] = up;
            let plus = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[j] = down;
            let minus = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[j] = original;
            // The realized step, which differs from 2·eps once θ ± eps is rounded.
            let step = (up - down).to_f64().unwrap();
            grads.tensors_mut()[ti].data_mut()[j] = T::lit((plus - minus) / step);
        }
    }
    grads
}

/// Central differences for piecewise-smooth losses.
///
/// `loss_fn` returns the loss and a signature of the active linear pieces
/// (for LeakyReLU networks, the sign of every pre-activation). A coordinate
/// whose `±eps` probes change the signature straddles a kink, where the
/// central difference does not estimate the derivative; it is reported as
/// `false` in the returned mask.
pub fn finite_difference_grad_piecewise<T, P, F>(mut loss_fn: F, params: &P, eps: f64) -> (P, Vec<Vec<bool>>)
where
    T: Real,
    P: ParamTensors<T> + Clone,
    F: FnMut(&P) -> (f64, Vec<bool>),
{
    assert!(eps > 0.0, "eps must be positive");
    let (_, base) = loss_fn(params);
    let mut probe = params.clone();
    let mut grads = params.clone();
    let mut valid = Vec::new();
    for ti in 0..params.tensors().len() {
        let len = params.tensors()[ti].len();
        let mut mask = vec![true; len];
        for (j, ok) in mask.iter_mut().enumerate() {
            let original = probe.tensors()[ti].data()[j];
            let up = original + T::lit(eps);
            let down = original - T::lit(eps);
            probe.tensors_mut()[ti].data_mut()[j] = up;
            let (plus, sig_plus) = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[j] = down;
            let (minus, sig_minus) = loss_fn(&probe);
            probe.tensors_mut()[ti].data_mut()[j] = original;
            *ok = sig_plus == base && sig_minus == base;
            let step = (up - down).to_f64().unwrap();
            grads.tensors_mut()[ti].data_mut()[j] = T::lit((plus - minus) / step);
        }
        valid.push(mask);
    }
    (grads, valid)
}

/// Largest [`relative_error`] over the coordinates marked `true` in `mask`.
pub fn max_relative_error_masked<T: Real, P: ParamTensors<T>>(a: &P, b: &P, mask: &[Vec<bool>]) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .zip(mask)
        .flat_map(|((x, y), m)| x.data().iter().zip(y.data()).zip(m))
        .filter(|(_, &ok)| ok)
        .map(|((x, y), _)| relative_error(x.to_f64().unwrap(), y.to_f64().unwrap()))
        .fold(0.0, f64::max)
}

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest [`relative_error`] over all coordinates of two same-shaped sets.
pub fn max_relative_error<T: Real, P: ParamTensors<T>>(a: &P, b: &P) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.data().iter().zip(y.data()))
        .map(|(x, y)| relative_error(x.to_f64().unwrap(), y.to_f64().unwrap()))
        .fold(0.0, f64::max)
}
