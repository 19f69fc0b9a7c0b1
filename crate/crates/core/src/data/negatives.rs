use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{BindingRecord, Label};
use crate::error::{Error, Result};

/// Where a generated negative came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeProvenance {
    pub record_id: String,
    pub epitope: String,
    /// Record whose TCR side was borrowed.
    pub tcr_donor: String,
    /// Record whose pMHC side was used.
    pub pmhc_source: String,
    pub with_replacement: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSet {
    pub records: Vec<BindingRecord>,
    pub provenance: Vec<NegativeProvenance>,
    pub warnings: Vec<String>,
}

/// Pairs every epitope's pMHC with TCRs observed against other epitopes,
/// producing exactly as many negatives per epitope as it has positives.
///
/// Records labelled nonbinder are ignored. A TCR may be reused across
/// different epitopes' negative sets; within one epitope it is drawn
/// without replacement until the eligible pool runs out.
pub fn sample_negatives(positives: &[BindingRecord], seed: u64) -> Result<NegativeSet> {
    let binders: Vec<&BindingRecord> = positives.iter().filter(|r| r.label.is_binder()).collect();
    let mut by_epitope: BTreeMap<&str, Vec<&BindingRecord>> = BTreeMap::new();
    for r in &binders {
        by_epitope.entry(r.epitope.as_str()).or_default().push(r);
    }
    if by_epitope.len() < 2 {
        return Err(Error::Sampling(format!(
            "need at least 2 distinct epitopes, found {}",
            by_epitope.len()
        )));
    }
    let known: HashSet<(String, &str)> = binders
        .iter()
        .map(|r| (r.tcr_key(), r.epitope.as_str()))
        .collect();
    // one donor per distinct TCR, first occurrence in record_id order
    let mut donors: BTreeMap<String, &BindingRecord> = BTreeMap::new();
    let mut sorted = binders.clone();
    sorted.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    for r in sorted {
        donors.entry(r.tcr_key()).or_insert(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NegativeSet::default();
    for (epitope, pos) in &by_epitope {
        let mut pool: Vec<&BindingRecord> = donors
            .iter()
            .filter(|(key, r)| {
                r.epitope != *epitope && !known.contains(&(key.to_string(), *epitope))
            })
            .map(|(_, r)| *r)
            .collect();
        if pool.is_empty() {
            return Err(Error::Sampling(format!(
                "no eligible TCRs for epitope {epitope}"
            )));
        }
        pool.shuffle(&mut rng);
        let need = pos.len();
        if pool.len() < need {
            out.warnings.push(format!(
                "epitope {epitope}: {} eligible TCRs for {need} positives, sampling with replacement",
                pool.len()
            ));
        }
        for (i, source) in pos.iter().enumerate() {
            let (donor, with_replacement) = if i < pool.len() {
                (pool[i], false)
            } else {
                (pool[rng.gen_range(0..pool.len())], true)
            };
            let mut neg =
                BindingRecord::new(format!("neg:{epitope}:{i}"), *epitope, Label::Nonbinder);
            neg.set_tcr_from(donor);
            neg.mhc_class = source.mhc_class;
            neg.mhc_allele = source.mhc_allele.clone();
            neg.species = donor.species.clone();
            out.provenance.push(NegativeProvenance {
                record_id: neg.record_id.clone(),
                epitope: epitope.to_string(),
                tcr_donor: donor.record_id.clone(),
                pmhc_source: source.record_id.clone(),
                with_replacement,
            });
            out.records.push(neg);
        }
    }
    Ok(out)
}
