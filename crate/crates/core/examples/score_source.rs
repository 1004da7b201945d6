//! Scoring one synthetic source with ternary and exhaustive search.

use quantrank::search::{metric_brute, metric_ternary, SearchConfig};
use quantrank::synth::{generate_split, Family, SynthSpec};

fn main() -> quantrank::Result<()> {
    let spec = SynthSpec {
        m: 3,
        n: 2,
        per_class: 400,
        overlap: 0.35,
        family: Family::Bump,
        seed: 11,
    };
    let (train, val) = generate_split(&spec, 0.2)?;
    let cfg = SearchConfig::default();

    let t = metric_ternary(&train, &val, &cfg)?;
    println!(
        "ternary: M={:.4} q*={} bracket=[{}, {}] steps={}",
        t.metric, t.q_star, t.final_left, t.final_right, t.steps
    );
    for p in &t.trace {
        println!(
            "  probe q={:>3}  train={:.4}  val={:.4}",
            p.q, p.train_acc, p.val_acc
        );
    }
    let b = metric_brute(&train, &val, &cfg)?;
    println!(
        "brute:   M={:.4} q*={} over {} levels",
        b.metric,
        b.q_star,
        b.evaluations()
    );
    println!(
        "Bayes accuracy of the generator: {:.4}",
        spec.bayes_accuracy()
    );
    Ok(())
}
