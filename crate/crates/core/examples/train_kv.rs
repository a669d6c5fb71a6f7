//! Randomized-dataset training on the key–value task.
//!
//! ```bash
//! cargo run --release --example train_kv -- [n] [hidden] [batch] [max_epochs] [seed]
//! ```
//!
//! Defaults to a desk-scale run: N = 2, hidden 64, batch 256, 20 000 epochs.

use std::time::Instant;

use appendable_memory::experiments::capacity_sweep;
use appendable_memory::trainer::{train_with, TrainConfig, TrainMode};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> anyhow::Result<()> {
    let config = TrainConfig {
        hidden_dim: arg(2, 64),
        batch_size: arg(3, 256),
        max_epochs: arg(4, 20_000),
        seed: arg(5, 1),
        ..TrainConfig::kv(TrainMode::Randomized, arg(1, 2))
    };
    println!("{config:?}");
    let start = Instant::now();
    let (params, report) = train_with(&config, |row| {
        if row.epoch % 500 == 0 {
            println!(
                "epoch {:>6}  loss {:.4}  train {:.3}  val {:.3}  ({:.0?})",
                row.epoch,
                row.loss,
                row.train_acc,
                row.val_acc.unwrap_or(f64::NAN),
                start.elapsed()
            );
        }
    })?;
    println!(
        "stopped after {} epochs ({:?}): train {:.3}, val {:.3?}",
        report.epochs_run, report.stop_reason, report.final_train_acc, report.final_val_acc
    );

    let counts = [config.n, 2 * config.n, 4 * config.n, 16 * config.n];
    let sweep = capacity_sweep(&params, &config.model_config(), &counts, 1024, config.seed)?;
    for row in &sweep.rows {
        println!("{:>4} inputs: accuracy {:.3}", row.param, row.accuracy);
    }
    Ok(())
}
