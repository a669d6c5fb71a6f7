//! Learns to sort: `n` scalar keys are memorized with distinct tags, then
//! rank prompts `0..n` recall the tags in ascending key order.
//!
//! ```bash
//! cargo run --release --example learned_sort -- [n] [hidden] [batch] [max_epochs] [seed]
//! ```

use appendable_memory::episodes::{sample_m0, stream_rng, Stream};
use appendable_memory::experiments::{sample_sort_input, sort_exact_match, sort_numbers};
use appendable_memory::model::{op_counts, reset_op_counts};
use appendable_memory::trainer::{train_with, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> anyhow::Result<()> {
    let config = TrainConfig {
        hidden_dim: arg(2, 64),
        batch_size: arg(3, 256),
        max_epochs: arg(4, 50_000),
        seed: arg(5, 1),
        ..TrainConfig::sort(arg(1, 3))
    };
    let (params, report) = train_with(&config, |row| {
        if row.epoch % 1000 == 0 {
            println!("epoch {:>6}  loss {:.4}  val {:.3}", row.epoch, row.loss, row.val_acc.unwrap_or(f64::NAN));
        }
    })?;
    println!("stopped after {} epochs ({:?})", report.epochs_run, report.stop_reason);

    let model = config.model_config();
    let score = sort_exact_match(&params, &model, config.n, 1024, config.seed)?;
    println!("exact match {:.3}, per query {:.3}", score.exact_match, score.per_query);

    let numbers = sample_sort_input(config.n, config.seed, 0)?;
    let m0 = sample_m0(model.memory_dim, &mut stream_rng(config.seed, Stream::Session, 0, 0));
    reset_op_counts();
    let sorted = sort_numbers(&params, &model, &numbers, &m0)?;
    let ops = op_counts();
    println!("input   {numbers:?}");
    println!("output  {:?}", sorted.numbers);
    println!("cost    {} memorizer steps, {} recaller passes", ops.memorize_steps, ops.recall_passes);
    Ok(())
}
