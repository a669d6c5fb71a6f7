//! Compares backpropagation-through-time gradients with central finite
//! differences on small random models.
//!
//! ```bash
//! cargo run --release --example gradient_check -- [trials] [eps]
//! ```

use appendable_memory::model::gradcheck::{run_gradcheck, DEFAULT_EPS, TOLERANCE};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);
    let eps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(DEFAULT_EPS);

    let report = run_gradcheck(trials, eps, 0)?;
    for (i, inst) in report.instances.iter().enumerate() {
        println!(
            "instance {i:>2}  N={}  max rel err {:.2e}  ({} coordinates, {} skipped at kinks)",
            inst.n, inst.max_rel_err, inst.checked, inst.kinked
        );
    }
    println!(
        "worst {:.2e} against tolerance {TOLERANCE:e}: {}",
        report.max_rel_err(),
        if report.passed() { "ok" } else { "FAILED" }
    );
    Ok(())
}
