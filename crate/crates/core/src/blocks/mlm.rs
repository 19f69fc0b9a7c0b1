use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::vocab::{MASK, NUM_SPECIALS, VOCAB_SIZE};

/// Target value for positions that take no part in the MLM loss.
pub const IGNORE_INDEX: i64 = -100;

/// BERT-style corruption: each residue position is selected with
/// `mask_prob`; selected positions become `[MASK]` (80%), a random residue
/// (10%) or stay unchanged (10%). Special tokens are never selected.
pub fn mask_for_mlm(ids: &[usize], mask_prob: f64, seed: u64) -> (Vec<usize>, Vec<i64>) {
    mask_for_mlm_with(ids, mask_prob, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mask_for_mlm_with(
    ids: &[usize],
    mask_prob: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<i64>) {
    let mut out = ids.to_vec();
    let mut targets = vec![IGNORE_INDEX; ids.len()];
    if mask_prob <= 0.0 {
        return (out, targets);
    }
    for (i, &id) in ids.iter().enumerate() {
        if id < NUM_SPECIALS || rng.gen::<f64>() >= mask_prob {
            continue;
        }
        targets[i] = id as i64;
        let r: f64 = rng.gen();
        if r < 0.8 {
            out[i] = MASK;
        } else if r < 0.9 {
            out[i] = rng.gen_range(NUM_SPECIALS..VOCAB_SIZE);
        }
    }
    (out, targets)
}
