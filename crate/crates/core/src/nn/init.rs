use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::{Real, Tensor};

/// `[fan_out × fan_in]` weights drawn i.i.d. from `U[−a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform_init<T: Real, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    assert!(fan_in >= 1 && fan_out >= 1, "fan_in and fan_out must be positive");
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let data = (0..fan_in * fan_out).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::from_vec(vec![fan_out, fan_in], data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_is_one_for_three_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Tensor<f32> = glorot_uniform_init(3, 3, &mut rng);
        assert_eq!(w.shape(), &[3, 3]);
        assert!(w.data().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn deterministic_given_seed() {
        let a: Tensor<f32> = glorot_uniform_init(7, 5, &mut ChaCha8Rng::seed_from_u64(42));
        let b: Tensor<f32> = glorot_uniform_init(7, 5, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn sample_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Tensor<f64> = glorot_uniform_init(250, 400, &mut rng);
        let mean = w.data().iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }
}
