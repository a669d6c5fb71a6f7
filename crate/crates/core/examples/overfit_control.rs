//! Standard (fixed-dataset) training as a control: the training accuracy
//! climbs while validation accuracy stays near chance.
//!
//! ```bash
//! cargo run --release --example overfit_control -- [hidden] [max_epochs] [seed] [n ...]
//! ```

use appendable_memory::experiments::overfit_control;
use appendable_memory::trainer::{TrainConfig, TrainMode};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let hidden = args.first().and_then(|s| s.parse().ok()).unwrap_or(256);
    let max_epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut ns: Vec<usize> = args.iter().skip(3).filter_map(|s| s.parse().ok()).collect();
    if ns.is_empty() {
        ns = vec![2];
    }
    let base = TrainConfig {
        hidden_dim: hidden,
        max_epochs,
        seed,
        ..TrainConfig::kv(TrainMode::Standard, 2)
    };
    println!("   n  epochs  train_acc  val_acc");
    for row in overfit_control(&base, &ns)? {
        println!(
            "{:>4}  {:>6}  {:>9.3}  {:>7.3}{}",
            row.n,
            row.epochs,
            row.train_acc,
            row.val_acc,
            if row.reached_threshold { "" } else { "  (threshold not reached)" }
        );
    }
    Ok(())
}
