//! Binder, MLM and auxiliary losses, their weighted combination, and the
//! rank-statistic ROC-AUC.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::blocks::IGNORE_INDEX;
use crate::data::record::{BindingRecord, Label, MhcClass};
use crate::error::{Error, Result};
use crate::tensor::{Float, Tape, Var};
use crate::zoo::LossHead;

/// Class index of the binder logit.
pub const BINDER_CLASS: usize = 1;
/// Reserved id for categories unseen when the index was built.
pub const OTHER: usize = 0;

/// Frozen categorical index; id 0 is [`OTHER`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryIndex {
    pub categories: Vec<String>,
}

impl CategoryIndex {
    pub fn build<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = values.into_iter().collect();
        CategoryIndex {
            categories: set.into_iter().map(String::from).collect(),
        }
    }

    /// Number of classes including OTHER.
    pub fn classes(&self) -> usize {
        self.categories.len() + 1
    }

    pub fn id(&self, value: &str) -> usize {
        self.categories
            .binary_search_by(|c| c.as_str().cmp(value))
            .map_or(OTHER, |i| i + 1)
    }
}

/// Label vocabularies for the auxiliary heads, built from training data.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpaces {
    pub mhc_allele: CategoryIndex,
    pub va: CategoryIndex,
    pub ja: CategoryIndex,
    pub vb: CategoryIndex,
    pub jb: CategoryIndex,
}

/// The four V/J targets, in head order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gene {
    Va,
    Ja,
    Vb,
    Jb,
}

impl Gene {
    pub const ALL: [Gene; 4] = [Gene::Va, Gene::Ja, Gene::Vb, Gene::Jb];

    pub fn chain(self) -> char {
        match self {
            Gene::Va | Gene::Ja => 'a',
            Gene::Vb | Gene::Jb => 'b',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gene::Va => "va",
            Gene::Ja => "ja",
            Gene::Vb => "vb",
            Gene::Jb => "jb",
        }
    }

    pub fn of(self, r: &BindingRecord) -> Option<&str> {
        match self {
            Gene::Va => r.va.as_deref(),
            Gene::Ja => r.ja.as_deref(),
            Gene::Vb => r.vb.as_deref(),
            Gene::Jb => r.jb.as_deref(),
        }
        .filter(|s| !s.is_empty())
    }
}

impl LabelSpaces {
    pub fn from_records(records: &[BindingRecord]) -> Self {
        let alleles = records
            .iter()
            .filter_map(|r| r.mhc_allele.as_deref())
            .filter(|s| !s.is_empty());
        let gene = |g: Gene| CategoryIndex::build(records.iter().filter_map(move |r| g.of(r)));
        LabelSpaces {
            mhc_allele: CategoryIndex::build(alleles),
            va: gene(Gene::Va),
            ja: gene(Gene::Ja),
            vb: gene(Gene::Vb),
            jb: gene(Gene::Jb),
        }
    }

    pub fn gene(&self, g: Gene) -> &CategoryIndex {
        match g {
            Gene::Va => &self.va,
            Gene::Ja => &self.ja,
            Gene::Vb => &self.vb,
            Gene::Jb => &self.jb,
        }
    }
}

/// Per-head weights; `enabled` overrides the architecture's head set when
/// present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: BTreeMap<LossHead, f64>,
    pub enabled: Option<BTreeSet<LossHead>>,
    pub mlm_mask_prob: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossHead::ALL.iter().map(|h| (*h, 1.0)).collect(),
            enabled: None,
            mlm_mask_prob: 0.15,
        }
    }
}

impl LossConfig {
    pub fn weight(&self, head: LossHead) -> f64 {
        self.weights.get(&head).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (h, w) in &self.weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight for {} must be >= 0, got {w}",
                    h.name()
                )));
            }
        }
        if let Some(e) = &self.enabled {
            if !e.contains(&LossHead::Binder) {
                return Err(Error::Config("BINDER loss must stay enabled".into()));
            }
        }
        if !(0.0..1.0).contains(&self.mlm_mask_prob) {
            return Err(Error::Config(format!(
                "mlm_mask_prob {} outside [0,1)",
                self.mlm_mask_prob
            )));
        }
        Ok(())
    }
}

pub fn binder_targets(labels: &[Label]) -> Vec<i64> {
    labels
        .iter()
        .map(|l| {
            if l.is_binder() {
                BINDER_CLASS as i64
            } else {
                1 - BINDER_CLASS as i64
            }
        })
        .collect()
}

/// Two-class cross-entropy against binder labels.
pub fn binder_loss<T: Float>(tape: &mut Tape<T>, logits: Var, labels: &[Label]) -> Result<Var> {
    tape.cross_entropy(logits, &binder_targets(labels), IGNORE_INDEX)
}

fn mean_ce_or_zero<T: Float>(tape: &mut Tape<T>, logits: Var, targets: &[i64]) -> Result<Var> {
    tape.cross_entropy(logits, targets, IGNORE_INDEX)
}

/// MHC class CE (NA rows ignored) plus allele CE (absent alleles ignored,
/// unseen ones map to OTHER). Either head may be absent.
pub fn mhc_loss<T: Float>(
    tape: &mut Tape<T>,
    class_logits: Option<Var>,
    allele_logits: Option<Var>,
    records: &[&BindingRecord],
    spaces: &LabelSpaces,
) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    if let Some(lg) = class_logits {
        let t: Vec<i64> = records
            .iter()
            .map(|r| match r.mhc_class {
                MhcClass::I => 0,
                MhcClass::II => 1,
                MhcClass::NA => IGNORE_INDEX,
            })
            .collect();
        terms.push((mean_ce_or_zero(tape, lg, &t)?, T::one()));
    }
    if let Some(lg) = allele_logits {
        let t: Vec<i64> = records
            .iter()
            .map(
                |r| match r.mhc_allele.as_deref().filter(|s| !s.is_empty()) {
                    Some(a) => spaces.mhc_allele.id(a) as i64,
                    None => IGNORE_INDEX,
                },
            )
            .collect();
        terms.push((mean_ce_or_zero(tape, lg, &t)?, T::one()));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    tape.weighted_sum(&terms).map(Some)
}

/// Sum of up to four V/J cross-entropies; absent fields contribute 0.
pub fn trvj_loss<T: Float>(
    tape: &mut Tape<T>,
    logits: &BTreeMap<Gene, Var>,
    records: &[&BindingRecord],
    spaces: &LabelSpaces,
) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    for (g, lg) in logits {
        let idx = spaces.gene(*g);
        let t: Vec<i64> = records
            .iter()
            .map(|r| g.of(r).map_or(IGNORE_INDEX, |v| idx.id(v) as i64))
            .collect();
        terms.push((mean_ce_or_zero(tape, *lg, &t)?, T::one()));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    tape.weighted_sum(&terms).map(Some)
}

/// `sum_i w_i * loss_i` over the enabled parts. Zero-weight parts are cut
/// from the backward graph.
pub fn total_loss<T: Float>(
    tape: &mut Tape<T>,
    parts: &BTreeMap<LossHead, Var>,
    config: &LossConfig,
    enabled: &BTreeSet<LossHead>,
) -> Result<Var> {
    let terms: Vec<(Var, T)> = parts
        .iter()
        .filter(|(h, _)| enabled.contains(h))
        .map(|(h, v)| (*v, T::from_f64_lossy(config.weight(*h))))
        .collect();
    if terms.is_empty() {
        return Err(Error::Config("no enabled loss parts".into()));
    }
    tape.weighted_sum(&terms)
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half (Mann-Whitney U / (n_pos * n_neg)).
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "ROC-AUC needs both classes (positives {n_pos}, negatives {n_neg})"
        )));
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    // sum of (1-based, tie-averaged) ranks of the positives, kept doubled
    // so the arithmetic stays in integers
    let mut pos_rank2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| scores[k].1).count() as u128;
        pos_rank2 += rank2 * pos_in_tie;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u2 = pos_rank2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Mergeable collection of `(score, is_positive)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AucAccumulator {
    scores: Vec<(f64, bool)>,
}

impl AucAccumulator {
    pub fn push(&mut self, score: f64, positive: bool) {
        self.scores.push((score, positive));
    }

    pub fn extend(&mut self, scores: impl IntoIterator<Item = (f64, bool)>) {
        self.scores.extend(scores);
    }

    pub fn merge(&mut self, other: AucAccumulator) {
        self.scores.extend(other.scores);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn auc(&self) -> Result<f64> {
        roc_auc(&self.scores)
    }
}

/// Mergeable per-part loss sums weighted by batch size.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossAccumulator {
    pub sums: BTreeMap<String, f64>,
    pub count: usize,
}

impl LossAccumulator {
    pub fn add(&mut self, parts: &BTreeMap<String, f64>, batch: usize) {
        for (k, v) in parts {
            *self.sums.entry(k.clone()).or_default() += v * batch as f64;
        }
        self.count += batch;
    }

    pub fn merge(&mut self, other: &LossAccumulator) {
        for (k, v) in &other.sums {
            *self.sums.entry(k.clone()).or_default() += v;
        }
        self.count += other.count;
    }

    pub fn means(&self) -> BTreeMap<String, f64> {
        let n = self.count.max(1) as f64;
        self.sums.iter().map(|(k, v)| (k.clone(), v / n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn category_index_reserves_other() {
        let idx = CategoryIndex::build(["B", "A", "B"]);
        assert_eq!(idx.classes(), 3);
        assert_eq!(idx.id("A"), 1);
        assert_eq!(idx.id("B"), 2);
        assert_eq!(idx.id("Z"), OTHER);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[(0.1, false), (0.2, false), (0.8, true), (0.9, true)]).unwrap(),
            1.0
        );
        assert_eq!(
            roc_auc(&[(0.5, false), (0.5, true), (0.5, true)]).unwrap(),
            0.5
        );
        assert!(matches!(
            roc_auc(&[(0.1, true), (0.2, true)]),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn binder_loss_examples() {
        let mut tape = Tape::<f64>::new();
        let l = tape.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let v = binder_loss(&mut tape, l, &[Label::Binder]).unwrap();
        assert!((tape.scalar(v) - 2f64.ln()).abs() < 1e-12);
        let l = tape.constant(Tensor::new(vec![1, 2], vec![-10.0, 10.0]).unwrap());
        let v = binder_loss(&mut tape, l, &[Label::Binder]).unwrap();
        assert!(tape.scalar(v) < 1e-4);
    }

    #[test]
    fn mhc_loss_examples() {
        let spaces = LabelSpaces {
            mhc_allele: CategoryIndex::build(
                (0..9).map(|i| ["a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8"][i]),
            ),
            ..Default::default()
        };
        let na = BindingRecord::new("r", "GIL", Label::Binder);
        let mut tape = Tape::<f64>::new();
        let cl = tape.constant(Tensor::new(vec![1, 2], vec![3.0, -1.0]).unwrap());
        let al = tape.constant(Tensor::zeros(vec![1, 10]));
        let v = mhc_loss(&mut tape, Some(cl), Some(al), &[&na], &spaces)
            .unwrap()
            .unwrap();
        assert_eq!(tape.scalar(v), 0.0);
        let mut r = na.clone();
        r.mhc_allele = Some("a3".into());
        let v = mhc_loss(&mut tape, None, Some(al), &[&r], &spaces)
            .unwrap()
            .unwrap();
        assert!((tape.scalar(v) - 10f64.ln()).abs() < 1e-12);
        r.mhc_class = MhcClass::I;
        let cl = tape.constant(Tensor::new(vec![1, 2], vec![20.0, -20.0]).unwrap());
        let v = mhc_loss(&mut tape, Some(cl), None, &[&r], &spaces)
            .unwrap()
            .unwrap();
        assert!(tape.scalar(v) < 1e-6);
    }

    #[test]
    fn trvj_loss_examples() {
        let spaces = LabelSpaces {
            va: CategoryIndex::build(["TRAV1"]),
            ..Default::default()
        };
        let mut r = BindingRecord::new("r", "GIL", Label::Binder);
        let mut tape = Tape::<f64>::new();
        let lg: BTreeMap<Gene, Var> = Gene::ALL
            .iter()
            .map(|g| {
                (
                    *g,
                    tape.constant(Tensor::new(vec![1, 2], vec![-20.0, 20.0]).unwrap()),
                )
            })
            .collect();
        let v = trvj_loss(&mut tape, &lg, &[&r], &spaces).unwrap().unwrap();
        assert_eq!(tape.scalar(v), 0.0);
        r.va = Some("TRAV1".into());
        let v = trvj_loss(&mut tape, &lg, &[&r], &spaces).unwrap().unwrap();
        assert!(tape.scalar(v) < 1e-6);
    }

    #[test]
    fn total_loss_is_weighted_sum() {
        let mut tape = Tape::<f64>::new();
        let a = tape.var(Tensor::scalar(0.5));
        let b = tape.var(Tensor::scalar(0.25));
        let parts: BTreeMap<LossHead, Var> = [(LossHead::Binder, a), (LossHead::MlmEnc, b)]
            .into_iter()
            .collect();
        let all: BTreeSet<LossHead> = LossHead::ALL.into_iter().collect();
        let cfg = LossConfig::default();
        let t = total_loss(&mut tape, &parts, &cfg, &all).unwrap();
        assert_eq!(tape.scalar(t), 0.75);
        let mut cfg = LossConfig::default();
        cfg.weights.insert(LossHead::MlmEnc, 0.0);
        let t = total_loss(&mut tape, &parts, &cfg, &all).unwrap();
        let g = tape.backward(t).unwrap();
        assert!(g.get(b).is_none());
        assert_eq!(g.get(a).unwrap(), &[1.0]);
    }

    #[test]
    fn accumulators_merge() {
        let mut a = AucAccumulator::default();
        a.extend([(0.1, false), (0.9, true)]);
        let mut b = AucAccumulator::default();
        b.extend([(0.5, true), (0.4, false)]);
        a.merge(b);
        assert_eq!(a.auc().unwrap(), 1.0);
        let mut l = LossAccumulator::default();
        l.add(&[("binder".to_string(), 1.0)].into_iter().collect(), 2);
        let mut m = LossAccumulator::default();
        m.add(&[("binder".to_string(), 4.0)].into_iter().collect(), 1);
        l.merge(&m);
        assert_eq!(l.means()["binder"], 2.0);
    }
}
