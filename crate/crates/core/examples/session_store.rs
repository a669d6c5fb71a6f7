//! Deployment: freeze a trained model in a checkpoint, append facts to a
//! memory vector, persist it, and look facts up after reloading.
//!
//! ```bash
//! cargo run --release --example session_store
//! ```

use appendable_memory::episodes::{gen_kv_episode, stream_rng, Stream, Task};
use appendable_memory::memstore::{load_memory, open_session, save_memory, Checkpoint};
use appendable_memory::trainer::{train, TrainConfig, TrainMode};

fn main() -> anyhow::Result<()> {
    let config = TrainConfig {
        hidden_dim: 64,
        batch_size: 256,
        max_epochs: 20_000,
        seed: 3,
        ..TrainConfig::kv(TrainMode::Randomized, 2)
    };
    let (params, report) = train(&config)?;
    let checkpoint = Checkpoint::new(Task::Kv, config.model_config(), config.n, config.seed, report.epochs_run, params);

    let dir = tempfile::tempdir()?;
    let ck_path = dir.path().join("kv.amem");
    let mem_path = dir.path().join("facts.amv");
    checkpoint.save(&ck_path)?;
    let checkpoint = Checkpoint::load(&ck_path)?;
    let frozen = checkpoint.params.fingerprint();

    let facts = gen_kv_episode(config.n, 16, &mut stream_rng(7, Stream::Session, 1, 0));
    let mut session = open_session(&checkpoint, &mut stream_rng(7, Stream::Session, 0, 0));
    for i in 0..facts.values.len() {
        session.append(facts.keys.row(i), facts.values[i])?;
    }
    save_memory(&mem_path, &session)?;
    println!("stored {} facts in a {}-dim memory", session.append_count(), session.memory().dim());

    let restored = load_memory(&mem_path, &checkpoint)?;
    for i in 0..facts.values.len() {
        let (class, probs) = restored.lookup(facts.keys.row(i))?;
        println!("fact {i}: stored {}, recalled {class} (p = {:.2})", facts.values[i], probs[class]);
    }
    assert_eq!(checkpoint.params.fingerprint(), frozen, "parameters never change after training");
    Ok(())
}
