//! Writing and reading source dump files and a ground-truth table.

use quantrank::io::{read_dump, read_source_dir, read_truth, write_source_dir, write_truth};
use quantrank::synth::{generate_family, FamilyConfig};

fn main() -> quantrank::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let family = FamilyConfig {
        count: 4,
        m: 3,
        per_class: 20,
        ..FamilyConfig::default()
    };
    let (sources, truth) = generate_family(&family.specs()?, family.val_fraction)?;
    let files = write_source_dir(dir.path(), &sources)?;
    write_truth(dir.path().join("truth.csv"), &truth)?;

    let text = std::fs::read_to_string(&files[0]).expect("dump written");
    println!("{}:", files[0].display());
    for line in text.lines().take(4) {
        println!("  {line}");
    }

    let dump = read_dump(&files[0])?;
    println!("header: {:?}, {} rows", dump.header, dump.data.len());
    let loaded = read_source_dir(dir.path())?;
    let truth = read_truth(dir.path().join("truth.csv"))?;
    for s in &loaded {
        println!(
            "{}: train {:?} val {:?} truth {:.4}",
            s.source_id,
            s.train.class_counts(),
            s.val.class_counts(),
            truth.get(&s.source_id).unwrap()
        );
    }
    Ok(())
}
