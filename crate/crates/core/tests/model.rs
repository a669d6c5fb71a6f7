use appendable_memory::episodes::{gen_kv_episode, gen_sort_episode, sample_m0};
use appendable_memory::model::{
    batch_evaluate, batch_loss_and_grads, episode_loss_and_grads, memorize_all, memorize_step, predict,
    recall_logits, ModelConfig, ModelParams,
};
use appendable_memory::nn::{softmax, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(hidden: usize) -> ModelConfig {
    ModelConfig::kv().with_hidden(hidden)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recall_probabilities_are_a_distribution(seed in any::<u64>(), n in 1usize..6) {
        let config = small(16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&config, &mut rng).unwrap();
        let ep = gen_kv_episode(n, 16, &mut rng).to_episode();
        let m0 = sample_m0(16, &mut rng);
        let m = memorize_all(&params, &config, &ep, &m0).unwrap();
        prop_assert_eq!(m.dim(), 16);
        let query = Tensor::vector(ep.keys.row(0).to_vec());
        let probs = softmax(&recall_logits(&params, &config, &m, &query).unwrap());
        prop_assert!((probs.data().iter().sum::<f32>() - 1.0).abs() < 1e-5);
        prop_assert!(probs.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!(predict(&params, &config, &m, &query).unwrap() < 10);
    }

    #[test]
    fn batched_and_per_episode_paths_agree(seed in any::<u64>(), n in 1usize..4, episodes in 1usize..5) {
        let config = small(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&config, &mut rng).unwrap();
        let eps: Vec<_> = (0..episodes).map(|_| gen_kv_episode(n, 16, &mut rng).to_episode()).collect();
        let m0: Vec<_> = (0..episodes).map(|_| sample_m0(8, &mut rng)).collect();
        let batched = batch_loss_and_grads(&params, &config, &eps, &m0).unwrap();
        let eval = batch_evaluate(&params, &config, &eps, &m0).unwrap();
        let mut loss = 0.0;
        for (ep, m) in eps.iter().zip(&m0) {
            let (l, _, _) = episode_loss_and_grads(&params, &config, ep, m).unwrap();
            loss += l * ep.num_queries() as f64;
            let memory = memorize_all(&params, &config, ep, m).unwrap();
            for q in 0..ep.num_queries() {
                let logits = recall_logits(&params, &config, &memory, &Tensor::vector(ep.queries.row(q).to_vec())).unwrap();
                prop_assert!(logits.all_finite());
            }
        }
        prop_assert!((batched.loss_sum - loss).abs() <= 1e-4 * loss.abs().max(1.0));
        prop_assert!((eval.loss_sum - batched.loss_sum).abs() <= 1e-4 * loss.abs().max(1.0));
        prop_assert_eq!(eval.predictions.len(), n * episodes);
    }

    #[test]
    fn sort_models_accept_rank_queries(seed in any::<u64>(), n in 1usize..=10) {
        let config = ModelConfig::sort().with_hidden(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&config, &mut rng).unwrap();
        let ep = gen_sort_episode(n, &mut rng).unwrap().to_episode();
        let m0 = sample_m0(8, &mut rng);
        let eval = batch_evaluate(&params, &config, std::slice::from_ref(&ep), std::slice::from_ref(&m0)).unwrap();
        prop_assert_eq!(eval.predictions.len(), n);
    }
}

#[test]
fn memory_depends_on_every_pair() {
    let config = small(16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = ModelParams::init(&config, &mut rng).unwrap();
    let m0 = sample_m0(16, &mut rng);
    let first = memorize_step(&params, &config, &m0, &Tensor::vector(vec![1.0; 16]), &Tensor::vector(vec![2.0])).unwrap();
    let other = memorize_step(&params, &config, &m0, &Tensor::vector(vec![1.0; 16]), &Tensor::vector(vec![3.0])).unwrap();
    assert_ne!(first, other);
}
