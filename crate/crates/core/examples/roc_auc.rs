//! Rank-based ROC-AUC with ties, and merging partial accumulators.

use tcrlab::losses::{roc_auc, AucAccumulator};

fn main() -> tcrlab::Result<()> {
    let scores = [
        (0.9, true),
        (0.8, false),
        (0.8, true),
        (0.3, false),
        (0.1, false),
    ];
    println!("auc = {}", roc_auc(&scores)?);
    let (mut a, mut b) = (AucAccumulator::default(), AucAccumulator::default());
    a.extend(scores[..2].iter().copied());
    b.extend(scores[2..].iter().copied());
    a.merge(b);
    println!("merged auc = {}", a.auc()?);
    match roc_auc(&[(0.5, true), (0.7, true)]) {
        Err(e) => println!("single class: {e}"),
        Ok(v) => println!("unexpected {v}"),
    }
    Ok(())
}
