use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::BindingRecord;
use crate::error::{Error, Result};

/// One cross-validation partition, as indices into the input slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Label-stratified k-fold assignment.
///
/// Records are ordered by `record_id` before a seeded shuffle within each
/// label, so the result depends only on the id set, `k` and `seed`.
/// Positives are dealt round-robin and negatives continue the rotation
/// where positives stopped, keeping fold sizes within one of each other.
pub fn kfold_split(records: &[BindingRecord], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Split(format!("k must be at least 2, got {k}")));
    }
    if k > records.len() {
        return Err(Error::Split(format!(
            "k={k} exceeds {} records",
            records.len()
        )));
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.record_id.as_str()) {
            return Err(Error::Split(format!("duplicate record_id {}", r.record_id)));
        }
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].record_id.cmp(&records[b].record_id));
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = order
        .into_iter()
        .partition(|&i| records[i].label.is_binder());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0usize; records.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        assignment[i] = slot % k;
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..records.len()).partition(|&i| assignment[i] == f);
            Fold {
                index: f,
                train,
                validation,
            }
        })
        .collect())
}
