use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{
    finite_difference_grad, max_relative_error, softmax, softmax_cross_entropy, DenseLayer, ParamTensors,
};

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
}

fn layer(w: Tensor<f64>, b: &[f64]) -> DenseLayer<f64> {
    DenseLayer::new(w, Tensor::vector(b.to_vec())).unwrap()
}

/// key_dim 1, hidden = memory = 2, 3 classes, slope 0.5, every weight set by hand.
fn hand_model() -> (ModelConfig, ModelParams<f64>) {
    let config = ModelConfig {
        key_dim: 1,
        value_dim: 1,
        query_dim: 1,
        hidden_dim: 2,
        memory_dim: 2,
        num_classes: 3,
        leaky_slope: 0.5,
    };
    let params = ModelParams {
        memorizer_input: layer(t64(&[2, 2], &[1.0, 0.0, 0.0, -1.0]), &[0.0, 0.5]),
        memorizer_recurrent: layer(t64(&[2, 2], &[0.5, 0.0, 0.0, 0.5]), &[0.0, 0.0]),
        memorizer_output: layer(t64(&[2, 2], &[1.0, 1.0, 1.0, -1.0]), &[0.0, -1.0]),
        recaller_query: layer(t64(&[2, 1], &[1.0, -1.0]), &[0.0, 0.0]),
        recaller_memory: layer(t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), &[-2.0, 0.0]),
        recaller_combine: layer(
            t64(&[2, 4], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            &[0.0, -3.0],
        ),
        recaller_output: layer(t64(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]), &[0.0, 0.0, 1.0]),
    };
    (config, params)
}

#[test]
fn memorize_step_matches_hand_computation() {
    // u = [2, 1]; p = σ([2, −0.5]) = [2, −0.25]
    // q = σ(0.5·[1, −2]) = [0.5, −0.5]
    // m = σ([2.5 − 0.75, 2.5 + 0.75 − 1]) = [1.75, 2.25]
    let (config, params) = hand_model();
    let m0 = MemoryVector::new(vec![1.0, -2.0]);
    let m = memorize_step(&params, &config, &m0, &Tensor::vector(vec![2.0]), &Tensor::vector(vec![1.0])).unwrap();
    assert_eq!(m.as_slice(), &[1.75, 2.25]);
}

#[test]
fn recall_matches_hand_computation() {
    // r = σ([3, −3]) = [3, −1.5]; s = σ([−0.25, 2.25]) = [−0.125, 2.25]
    // h = σ([3, 2.25 − 3]) = [3, −0.375]; logits = [3, −0.375, 3.625]
    let (config, params) = hand_model();
    let m = MemoryVector::new(vec![1.75, 2.25]);
    let logits = recall_logits(&params, &config, &m, &Tensor::vector(vec![3.0])).unwrap();
    assert_eq!(logits.data(), &[3.0, -0.375, 3.625]);
    assert_eq!(predict(&params, &config, &m, &Tensor::vector(vec![3.0])).unwrap(), 2);
}

fn random_model(config: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: ModelParams<f64> = ModelParams::init(config, &mut rng).unwrap();
    // Nonzero biases so the checks exercise every term.
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            for x in t.data_mut() {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
    }
    params
}

fn random_episode(config: &ModelConfig, n: usize, rng: &mut impl Rng) -> Episode {
    let keys: Vec<f32> = (0..n * config.key_dim).map(|_| rng.gen_range(0.0..9.0)).collect();
    let keys = Tensor::from_vec(vec![n, config.key_dim], keys).unwrap();
    let values: Vec<usize> = (0..n).map(|_| rng.gen_range(0..config.num_classes)).collect();
    Episode {
        queries: keys.clone(),
        keys,
        targets: values.clone(),
        values,
    }
}

fn random_m0(dim: usize, rng: &mut impl Rng) -> MemoryVector<f64> {
    MemoryVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        key_dim: 4,
        query_dim: 4,
        ..ModelConfig::kv().with_hidden(8)
    }
}

#[test]
fn shape_law_for_default_config() {
    let config = ModelConfig::kv();
    let params = random_model(&config, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m0 = random_m0(256, &mut rng);
    let key = Tensor::vector(vec![1.0; 16]);
    let m = memorize_step(&params, &config, &m0, &key, &Tensor::vector(vec![3.0])).unwrap();
    assert_eq!(m.dim(), 256);
    let logits = recall_logits(&params, &config, &m, &key).unwrap();
    assert_eq!(logits.len(), 10);
}

#[test]
fn dimension_errors() {
    let config = tiny_config();
    let params = random_model(&config, 1);
    let m0 = MemoryVector::new(vec![0.0; 8]);
    let bad_key = Tensor::vector(vec![0.0; 3]);
    let v = Tensor::vector(vec![1.0]);
    assert!(matches!(
        memorize_step(&params, &config, &m0, &bad_key, &v),
        Err(ModelError::Dimension { what: "key", .. })
    ));
    let short = MemoryVector::new(vec![0.0; 7]);
    assert!(memorize_step(&params, &config, &short, &Tensor::vector(vec![0.0; 4]), &v).is_err());
    assert!(recall_logits(&params, &config, &m0, &bad_key).is_err());
}

#[test]
fn config_validation() {
    assert!(ModelConfig::kv().validate().is_ok());
    let mut c = ModelConfig::kv();
    c.memory_dim = 128;
    assert!(c.validate().is_err());
    let mut c = ModelConfig::kv();
    c.num_classes = 1;
    assert!(c.validate().is_err());
    let mut c = ModelConfig::kv();
    c.leaky_slope = 1.0;
    assert!(c.validate().is_err());
}

#[test]
fn memorize_all_is_a_fold() {
    let config = tiny_config();
    let params = random_model(&config, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ep = random_episode(&config, 3, &mut rng);
    let m0 = random_m0(8, &mut rng);

    let mut manual = m0.clone();
    for i in 0..3 {
        let key = Tensor::vector(ep.keys.row(i).iter().map(|&x| x as f64).collect());
        let value = Tensor::vector(vec![ep.values[i] as f64]);
        manual = memorize_step(&params, &config, &manual, &key, &value).unwrap();
        if i == 0 {
            let single = Episode {
                keys: Tensor::from_vec(vec![1, 4], ep.keys.row(0).to_vec()).unwrap(),
                values: vec![ep.values[0]],
                queries: Tensor::from_vec(vec![1, 4], ep.keys.row(0).to_vec()).unwrap(),
                targets: vec![ep.values[0]],
            };
            assert_eq!(memorize_all(&params, &config, &single, &m0).unwrap(), manual);
        }
    }
    assert_eq!(memorize_all(&params, &config, &ep, &m0).unwrap(), manual);
}

#[test]
fn memorize_all_rejects_empty_episode() {
    let config = tiny_config();
    let params = random_model(&config, 3);
    let ep = Episode {
        keys: Tensor::zeros(&[1, 4]),
        values: vec![],
        queries: Tensor::zeros(&[1, 4]),
        targets: vec![],
    };
    assert_eq!(
        memorize_all(&params, &config, &ep, &MemoryVector::new(vec![0.0; 8])),
        Err(ModelError::EmptyEpisode)
    );
}

#[test]
fn memory_depends_on_order() {
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let params = random_model(&config, seed);
        let ep = random_episode(&config, 3, &mut rng);
        let m0 = random_m0(8, &mut rng);
        let rows: Vec<f32> = (0..3).rev().flat_map(|i| ep.keys.row(i).to_vec()).collect();
        let reversed = Episode {
            keys: Tensor::from_vec(vec![3, 4], rows).unwrap(),
            values: ep.values.iter().rev().copied().collect(),
            queries: ep.queries.clone(),
            targets: ep.targets.clone(),
        };
        assert_ne!(
            memorize_all(&params, &config, &ep, &m0).unwrap(),
            memorize_all(&params, &config, &reversed, &m0).unwrap()
        );
    }
}

#[test]
fn memorize_and_recall_are_deterministic() {
    let config = tiny_config();
    let params = random_model(&config, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ep = random_episode(&config, 2, &mut rng);
    let m0 = random_m0(8, &mut rng);
    let a = memorize_all(&params, &config, &ep, &m0).unwrap();
    let b = memorize_all(&params, &config, &ep, &m0).unwrap();
    assert_eq!(a, b);
    let q = Tensor::vector(ep.queries.row(0).iter().map(|&x| x as f64).collect());
    assert_eq!(
        recall_logits(&params, &config, &a, &q).unwrap(),
        recall_logits(&params, &config, &b.clone(), &q).unwrap()
    );
}

#[test]
fn predict_tie_break_and_softmax_agreement() {
    assert_eq!(argmax(&[0.5f32; 10]), 0);
    assert_eq!(argmax(&[0.0f32, 3.0, 1.0, 3.0]), 1);
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..20 {
        let params = random_model(&config, seed);
        let m = random_m0(8, &mut rng);
        let q = Tensor::vector((0..4).map(|_| rng.gen_range(0.0..9.0)).collect());
        let logits = recall_logits(&params, &config, &m, &q).unwrap();
        let probs = softmax(&logits);
        assert_eq!(predict(&params, &config, &m, &q).unwrap(), argmax(probs.data()));
    }
}

#[test]
fn forced_logits_direction_wins() {
    let config = tiny_config();
    let mut params = ModelParams::<f64>::zeros(&config);
    params.recaller_output.bias.data_mut()[7] = 5.0;
    let m = MemoryVector::new(vec![0.3; 8]);
    assert_eq!(predict(&params, &config, &m, &Tensor::vector(vec![1.0; 4])).unwrap(), 7);
}

#[test]
fn duplicated_pair_loss_equals_single_query_loss() {
    let config = tiny_config();
    let params = random_model(&config, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let key: Vec<f32> = (0..4).map(|_| rng.gen_range(0.0..9.0)).collect();
    let n = 4;
    let keys = Tensor::from_vec(vec![n, 4], key.repeat(n)).unwrap();
    let ep = Episode {
        queries: keys.clone(),
        keys,
        values: vec![6; n],
        targets: vec![6; n],
    };
    let m0 = random_m0(8, &mut rng);
    let (loss, _, _) = episode_loss_and_grads(&params, &config, &ep, &m0).unwrap();
    let m = memorize_all(&params, &config, &ep, &m0).unwrap();
    let q = Tensor::vector(key.iter().map(|&x| x as f64).collect());
    let (single, _) = softmax_cross_entropy(&recall_logits(&params, &config, &m, &q).unwrap(), 6).unwrap();
    assert!((loss - single).abs() < 1e-12, "{loss} vs {single}");
}

#[test]
fn batched_and_single_paths_agree() {
    let config = tiny_config();
    let params = random_model(&config, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let eps: Vec<Episode> = (0..5).map(|_| random_episode(&config, 3, &mut rng)).collect();
    let m0: Vec<MemoryVector<f64>> = (0..5).map(|_| random_m0(8, &mut rng)).collect();
    let eval = batch_evaluate(&params, &config, &eps, &m0).unwrap();
    let mut loss_sum = 0.0;
    let mut preds = Vec::new();
    for (ep, m) in eps.iter().zip(&m0) {
        let mem = memorize_all(&params, &config, ep, m).unwrap();
        for i in 0..ep.num_queries() {
            let q = Tensor::vector(ep.queries.row(i).iter().map(|&x| x as f64).collect());
            let logits = recall_logits(&params, &config, &mem, &q).unwrap();
            preds.push(argmax(logits.data()));
            loss_sum += softmax_cross_entropy(&logits, ep.targets[i]).unwrap().0;
        }
    }
    assert_eq!(eval.predictions, preds);
    assert!((eval.loss_sum - loss_sum).abs() < 1e-9);
}

#[test]
fn bptt_matches_finite_differences() {
    // eps small enough that no probe crosses a LeakyReLU kink.
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for instance in 0..12 {
        let n = 1 + instance % 3;
        let params = random_model(&config, 100 + instance as u64);
        let ep = random_episode(&config, n, &mut rng);
        let m0 = random_m0(8, &mut rng);
        let (_, analytic, _) = episode_loss_and_grads(&params, &config, &ep, &m0).unwrap();
        let fd = finite_difference_grad(
            |p: &ModelParams<f64>| episode_loss(p, &config, &ep, &m0).unwrap(),
            &params,
            1e-6,
        );
        let err = max_relative_error(&analytic, &fd);
        assert!(err < 1e-3, "instance {instance} (N={n}): max rel. err {err}");
    }
}

#[test]
fn kink_guard_excludes_straddling_coordinates() {
    // At eps = 1e-3 some probes straddle a kink. Unguarded, those dominate the
    // error; guarded, only the O(eps²) truncation error remains.
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut flagged = 0;
    let mut worst_unguarded: f64 = 0.0;
    for instance in 0..12 {
        let n = 1 + instance % 3;
        let params = random_model(&config, 100 + instance as u64);
        let ep = random_episode(&config, n, &mut rng);
        let m0 = random_m0(8, &mut rng);
        let report = gradcheck::check_episode(&params, &config, &ep, &m0, 1e-3).unwrap();
        assert!(report.max_rel_err < 1e-2, "instance {instance}: {report:?}");
        flagged += report.kinked;

        let (_, analytic, _) = episode_loss_and_grads(&params, &config, &ep, &m0).unwrap();
        let fd = finite_difference_grad(
            |p: &ModelParams<f64>| episode_loss(p, &config, &ep, &m0).unwrap(),
            &params,
            1e-3,
        );
        worst_unguarded = worst_unguarded.max(max_relative_error(&analytic, &fd));
    }
    assert!(flagged > 0);
    assert!(worst_unguarded > 1e-2);
}

#[test]
fn every_memorizer_step_receives_gradient() {
    let config = tiny_config();
    let params = random_model(&config, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ep = random_episode(&config, 3, &mut rng);
    let m0 = random_m0(8, &mut rng);
    let (_, grads, _) = episode_loss_and_grads(&params, &config, &ep, &m0).unwrap();
    assert!(grads.memorizer_input.weight.data().iter().any(|&g| g != 0.0));
    assert!(grads.memorizer_recurrent.weight.data().iter().any(|&g| g != 0.0));

    // Changing only the oldest pair's key must change the W1 gradient: the
    // gradient reaches step 1.
    let mut altered = ep.clone();
    altered.keys.data_mut()[0] += 1.0;
    let (_, grads2, _) = episode_loss_and_grads(&params, &config, &altered, &m0).unwrap();
    assert_ne!(grads.memorizer_input.weight, grads2.memorizer_input.weight);
}
