//! Trains a small key–value model, then measures how recall degrades when
//! more pairs are appended than it was trained on, overall and by position.
//!
//! ```bash
//! cargo run --release --example capacity_sweep -- [n] [hidden] [seed]
//! ```

use appendable_memory::experiments::{capacity_sweep, positional_accuracy};
use appendable_memory::trainer::{train, TrainConfig, TrainMode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<u64>());
    let n = args.next().transpose()?.unwrap_or(2) as usize;
    let hidden = args.next().transpose()?.unwrap_or(64) as usize;
    let seed = args.next().transpose()?.unwrap_or(1);

    let config = TrainConfig {
        hidden_dim: hidden,
        batch_size: 256,
        max_epochs: 50_000,
        seed,
        ..TrainConfig::kv(TrainMode::Randomized, n)
    };
    let (params, report) = train(&config)?;
    println!("trained N={n} in {} epochs ({:?})", report.epochs_run, report.stop_reason);

    let model = config.model_config();
    let counts: Vec<usize> = [1, 2, 4, 8, 16, 32].iter().map(|k| (k * n).min(256)).collect();
    let sweep = capacity_sweep(&params, &model, &counts, 1024, seed)?;
    print!("{}", sweep.to_csv("(in memory)"));

    let positional = positional_accuracy(&params, &model, 2 * n, 1024, seed)?;
    println!("accuracy by position at {} inputs (1 = oldest):", 2 * n);
    for row in &positional.rows {
        println!("  {:>3}  {:.3}", row.param, row.accuracy);
    }
    println!("std across positions {:.3}", positional.std_accuracy());
    Ok(())
}
