//! Expected validation accuracy drifts to 1/2 once the level passes the
//! convergence threshold for the given sample size.

use quantrank::theorem::{convergence_sweep, q_bound, BoundedDensity, TheoremRunConfig, ValMode};

fn main() -> quantrank::Result<()> {
    let f1: BoundedDensity = "power:1".parse()?;
    let f2: BoundedDensity = "power-reflected:1".parse()?;
    let cfg = TheoremRunConfig {
        n: 100,
        q_schedule: vec![2, 4, 8, 16, 64, 256, 1024, 10_000, 40_000, 100_000],
        val_mode: ValMode::Analytic,
        trials: 50,
        epsilon: 0.1,
        delta: 0.5,
        seed: 7,
    };
    let table = convergence_sweep(&cfg, &f1, &f2)?;
    println!("B = {}, threshold = {:.1}", table.bound, table.bound_q);
    println!(
        "{:>7}  {:>8}  {:>8}  {:>8}  beyond",
        "q", "E[A_val]", "stderr", "A_train"
    );
    for r in &table.rows {
        println!(
            "{:>7}  {:>8.4}  {:>8.4}  {:>8.4}  {}",
            r.q, r.mean_val_acc, r.stderr, r.mean_train_acc, r.satisfied
        );
    }
    for n in [10, 100, 1000] {
        println!("threshold for n={n}: {:.1}", q_bound(0.1, 0.5, 2.0, n)?);
    }
    Ok(())
}
