//! Training accuracy keeps rising with q while validation accuracy peaks
//! and falls. Prints the curve as CSV.

use quantrank::search::{prepare, sweep_curve, SearchConfig};
use quantrank::synth::{generate_split, Family, SynthSpec};

fn main() -> quantrank::Result<()> {
    let spec = SynthSpec {
        m: 2,
        n: 2,
        per_class: 250,
        overlap: 0.5,
        family: Family::Striped {
            stripes_per_class: 4,
        },
        seed: 3,
    };
    let (train, val) = generate_split(&spec, 0.2)?;
    let splits = prepare(&train, &val, &SearchConfig::default())?;
    let levels: Vec<u64> = (splits.q_min..=splits.q_max).collect();
    let curve = sweep_curve(&splits.train, &splits.val, &levels)?;

    println!("q,train_acc,val_acc");
    for p in &curve {
        println!("{},{:.4},{:.4}", p.q, p.train_acc, p.val_acc);
    }
    let best = curve
        .iter()
        .fold(&curve[0], |b, p| if p.val_acc > b.val_acc { p } else { b });
    eprintln!(
        "validation peak at q={} ({:.4}); range [{}, {}]",
        best.q, best.val_acc, splits.q_min, splits.q_max
    );
    Ok(())
}
