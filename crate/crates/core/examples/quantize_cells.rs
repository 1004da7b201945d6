//! Mapping softmax vectors to quantization cells.

use quantrank::{quantize, QuantizationLevel, SoftmaxVector};

fn main() -> quantrank::Result<()> {
    let p = SoftmaxVector::new(vec![0.1, 0.7, 0.2])?;
    for q in [2, 3, 6, 12] {
        let key = quantize(&p, QuantizationLevel::new(q)?);
        println!(
            "q={q:>2}  digits={:?}  flat index={}",
            key.digits(),
            key.flat_index()?
        );
    }

    // A cell at level 2q sits inside exactly one cell at level q.
    let coarse = quantize(&p, QuantizationLevel::new(5)?);
    let fine = quantize(&p, QuantizationLevel::new(10)?);
    let parent: Vec<u64> = fine.digits().iter().map(|d| d / 2).collect();
    assert_eq!(parent, coarse.digits());
    println!(
        "level-10 cell {:?} refines level-5 cell {:?}",
        fine.digits(),
        coarse.digits()
    );

    // Sums within 1e-6 of one are renormalized; anything further is rejected.
    println!("{:?}", SoftmaxVector::new(vec![0.5, 0.5000004])?.as_slice());
    println!("{}", SoftmaxVector::new(vec![0.5, 0.4]).unwrap_err());
    Ok(())
}
