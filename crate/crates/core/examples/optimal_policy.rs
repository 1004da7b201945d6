//! Fitting the per-cell policy and scoring it on training and validation data.

use quantrank::{
    build_counts, derive_policy, train_accuracy_exact, val_accuracy, LabeledDataset,
    QuantizationLevel,
};

fn main() -> quantrank::Result<()> {
    let train = LabeledDataset::from_rows(
        2,
        vec![
            (vec![0.9, 0.1], 1),
            (vec![0.8, 0.2], 1),
            (vec![0.6, 0.4], 1),
            (vec![0.55, 0.45], 2),
            (vec![0.3, 0.7], 2),
            (vec![0.1, 0.9], 2),
        ],
    )?;
    let val = LabeledDataset::from_rows(
        2,
        vec![
            (vec![0.85, 0.15], 1),
            (vec![0.52, 0.48], 1),
            (vec![0.45, 0.55], 2),
            (vec![0.2, 0.8], 2),
        ],
    )?;

    for q in [2, 4, 10] {
        let level = QuantizationLevel::new(q)?;
        let counts = build_counts(&train, level)?;
        let policy = derive_policy(&counts);
        println!("q={q}");
        for (key, decision) in policy.decisions() {
            println!(
                "  cell {:?} -> {decision:?}  counts {:?}",
                key.digits(),
                counts.get(key).unwrap()
            );
        }
        println!(
            "  train accuracy {} (exact)  val accuracy {:.3}",
            train_accuracy_exact(&counts, &policy)?,
            val_accuracy(&val, &policy, level)?
        );
    }
    Ok(())
}
