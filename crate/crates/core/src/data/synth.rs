use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{BindingRecord, Label, MhcClass};
use super::vocab::Modality;
use crate::error::{Error, Result};

/// Letters reserved for planted motifs; background residues never use them.
pub const MOTIF_ALPHABET: &str = "CFHMWY";
/// Background residues (the canonical alphabet minus [`MOTIF_ALPHABET`]).
pub const BACKGROUND_ALPHABET: &str = "ADEGIKLNPQRSTV";

pub const CONTACT_DISTANCE: f64 = 1.0;
pub const FAR_DISTANCE: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingRule {
    /// Label follows the epitope motif alone.
    EpitopeOnly,
    /// Label follows the CDR3β motif alone.
    Cdr3bOnly,
    /// Binder iff the epitope and CDR3β carry a complementary motif pair.
    Joint,
}

impl BindingRule {
    pub fn name(self) -> &'static str {
        match self {
            BindingRule::EpitopeOnly => "epitope-only",
            BindingRule::Cdr3bOnly => "cdr3b-only",
            BindingRule::Joint => "joint",
        }
    }
}

impl fmt::Display for BindingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BindingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epitope-only" => Ok(BindingRule::EpitopeOnly),
            "cdr3b-only" => Ok(BindingRule::Cdr3bOnly),
            "joint" => Ok(BindingRule::Joint),
            other => Err(Error::Config(format!(
                "unknown rule {other}; expected epitope-only, cdr3b-only or joint"
            ))),
        }
    }
}

/// Shape of a synthetic dataset.
///
/// Chains are laid out as `FR1 CDR1 FR2 CDR2 FR3 CDR3 FR4`, with the
/// framework pieces filling whatever `chain_len` leaves over. The motif
/// sits at a random offset inside CDR3 (and inside the epitope).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub rule: BindingRule,
    pub motif_len: usize,
    /// Number of motif pairs; even, because single-side rules split them
    /// into a binding half and a non-binding half.
    pub n_motifs: usize,
    pub epitope_len: usize,
    pub cdr1_len: usize,
    pub cdr2_len: usize,
    pub cdr3_len: usize,
    pub chain_len: usize,
    /// Relative jitter applied to ground-truth distances.
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2000,
            rule: BindingRule::Joint,
            motif_len: 3,
            n_motifs: 4,
            epitope_len: 12,
            cdr1_len: 5,
            cdr2_len: 5,
            cdr3_len: 10,
            chain_len: 28,
            jitter: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.motif_len == 0 {
            return bad("motif_len must be positive".into());
        }
        if self.motif_len > self.epitope_len || self.motif_len > self.cdr3_len {
            return bad(format!(
                "motif length {} exceeds epitope ({}) or CDR3 ({}) length",
                self.motif_len, self.epitope_len, self.cdr3_len
            ));
        }
        if self.cdr1_len + self.cdr2_len + self.cdr3_len + 3 > self.chain_len {
            return bad(format!(
                "chain_len {} cannot hold CDRs of {}+{}+{} plus framework",
                self.chain_len, self.cdr1_len, self.cdr2_len, self.cdr3_len
            ));
        }
        if self.n_motifs < 2 || !self.n_motifs.is_multiple_of(2) {
            return bad(format!(
                "n_motifs must be even and at least 2, got {}",
                self.n_motifs
            ));
        }
        let distinct = MOTIF_ALPHABET.len().pow(self.motif_len.min(8) as u32);
        if 3 * self.n_motifs > distinct {
            return bad(format!(
                "{} motifs of length {} are not distinguishable",
                self.n_motifs, self.motif_len
            ));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter {} outside [0,1)", self.jitter));
        }
        Ok(())
    }
}

/// Per-residue minimum interaction distances of one record, per
/// `modality -> partner`. `None` marks a not-available distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceGroundTruth {
    pub record_id: String,
    pub distances: BTreeMap<Modality, BTreeMap<Modality, Vec<Option<f64>>>>,
}

impl DistanceGroundTruth {
    pub fn get(&self, modality: Modality, partner: Modality) -> Option<&[Option<f64>]> {
        self.distances
            .get(&modality)?
            .get(&partner)
            .map(Vec::as_slice)
    }
}

/// The planted motif pairs, and where each record carries them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifBook {
    pub epitope: Vec<String>,
    pub cdr3b: Vec<String>,
    pub cdr3a: Vec<String>,
}

impl MotifBook {
    fn generate(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> MotifBook {
        let letters: Vec<char> = MOTIF_ALPHABET.chars().collect();
        let mut used = BTreeSet::new();
        let mut draw = |rng: &mut ChaCha8Rng| loop {
            let m: String = (0..cfg.motif_len)
                .map(|_| *letters.choose(rng).unwrap())
                .collect();
            if used.insert(m.clone()) {
                return m;
            }
        };
        let epitope = (0..cfg.n_motifs).map(|_| draw(rng)).collect();
        let cdr3b = (0..cfg.n_motifs).map(|_| draw(rng)).collect();
        let cdr3a = (0..cfg.n_motifs).map(|_| draw(rng)).collect();
        MotifBook {
            epitope,
            cdr3b,
            cdr3a,
        }
    }

    fn index_in(motifs: &[String], seq: &str) -> Option<usize> {
        motifs.iter().position(|m| seq.contains(m.as_str()))
    }

    /// Re-derives a label from sequences alone by locating the motifs.
    pub fn label_of(&self, rule: BindingRule, record: &BindingRecord) -> Option<Label> {
        let half = self.epitope.len() / 2;
        let e = Self::index_in(&self.epitope, &record.epitope)?;
        let b = Self::index_in(&self.cdr3b, record.cdr3b.as_deref()?)?;
        let binder = match rule {
            BindingRule::EpitopeOnly => e < half,
            BindingRule::Cdr3bOnly => b < half,
            BindingRule::Joint => e == b,
        };
        Some(if binder {
            Label::Binder
        } else {
            Label::Nonbinder
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub records: Vec<BindingRecord>,
    pub ground_truth: Vec<DistanceGroundTruth>,
    pub motifs: MotifBook,
}

fn background(rng: &mut ChaCha8Rng, n: usize) -> String {
    let letters: Vec<char> = BACKGROUND_ALPHABET.chars().collect();
    (0..n).map(|_| *letters.choose(rng).unwrap()).collect()
}

/// Builds a background string of length `len` with `motif` planted at a
/// random offset; returns the string and the motif offset.
fn plant(rng: &mut ChaCha8Rng, len: usize, motif: &str) -> (String, usize) {
    let at = rng.gen_range(0..=len - motif.len());
    let mut s = background(rng, at);
    s.push_str(motif);
    s.push_str(&background(rng, len - at - motif.len()));
    (s, at)
}

fn distances(
    rng: &mut ChaCha8Rng,
    len: usize,
    contact: std::ops::Range<usize>,
    jitter: f64,
) -> Vec<Option<f64>> {
    (0..len)
        .map(|i| {
            let base = if contact.contains(&i) {
                CONTACT_DISTANCE
            } else {
                FAR_DISTANCE
            };
            let j = if jitter > 0.0 {
                rng.gen_range(-jitter..=jitter)
            } else {
                0.0
            };
            Some(base * (1.0 + j))
        })
        .collect()
}

struct Chain {
    full: String,
    cdrs: [String; 3],
    cdr3_offset: usize,
    motif_at: usize,
}

fn chain(rng: &mut ChaCha8Rng, cfg: &SynthConfig, motif: &str) -> Chain {
    let spare = cfg.chain_len - cfg.cdr1_len - cfg.cdr2_len - cfg.cdr3_len;
    // FR1, FR2, FR3 get one residue each at least, FR4 takes the rest
    let fr1 = 1 + rng.gen_range(0..=(spare - 3) / 3);
    let fr2 = 1 + rng.gen_range(0..=(spare - 3) / 3);
    let fr3 = 1 + rng.gen_range(0..=(spare - 3) / 3);
    let fr4 = spare - fr1 - fr2 - fr3;
    let cdr1 = background(rng, cfg.cdr1_len);
    let cdr2 = background(rng, cfg.cdr2_len);
    let (cdr3, motif_at) = plant(rng, cfg.cdr3_len, motif);
    let mut full = background(rng, fr1);
    full += &cdr1;
    full += &background(rng, fr2);
    full += &cdr2;
    full += &background(rng, fr3);
    let cdr3_offset = full.len();
    full += &cdr3;
    full += &background(rng, fr4);
    Chain {
        full,
        cdrs: [cdr1, cdr2, cdr3],
        cdr3_offset,
        motif_at,
    }
}

/// Generates a balanced dataset whose labels are a deterministic function
/// of planted motifs, together with distances that are small exactly at
/// the motif residues.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motifs = MotifBook::generate(cfg, &mut rng);
    let k = cfg.n_motifs;
    let half = k / 2;
    let mut labels: Vec<bool> = (0..cfg.n).map(|i| i < cfg.n / 2).collect();
    labels.shuffle(&mut rng);
    let alleles_i = ["HLA-A*02:01", "HLA-B*07:02", "HLA-A*01:01"];
    let alleles_ii = ["HLA-DRB1*01:01", "HLA-DRB1*04:01"];
    let mut records = Vec::with_capacity(cfg.n);
    let mut ground_truth = Vec::with_capacity(cfg.n);
    for (i, binder) in labels.into_iter().enumerate() {
        let (ke, kb) = match cfg.rule {
            BindingRule::EpitopeOnly => {
                let ke = if binder {
                    rng.gen_range(0..half)
                } else {
                    rng.gen_range(half..k)
                };
                (ke, rng.gen_range(0..k))
            }
            BindingRule::Cdr3bOnly => {
                let kb = if binder {
                    rng.gen_range(0..half)
                } else {
                    rng.gen_range(half..k)
                };
                (rng.gen_range(0..k), kb)
            }
            BindingRule::Joint => {
                let kb = rng.gen_range(0..k);
                let ke = if binder {
                    kb
                } else {
                    (kb + rng.gen_range(1..k)) % k
                };
                (ke, kb)
            }
        };
        // the alpha motif mirrors the beta one so both chains carry the signal
        let ka = kb;
        let (epitope, e_at) = plant(&mut rng, cfg.epitope_len, &motifs.epitope[ke]);
        let beta = chain(&mut rng, cfg, &motifs.cdr3b[kb]);
        let alpha = chain(&mut rng, cfg, &motifs.cdr3a[ka]);
        let label = if binder {
            Label::Binder
        } else {
            Label::Nonbinder
        };
        let mut rec = BindingRecord::new(format!("syn{i:06}"), epitope, label);
        rec.tcr_a = Some(alpha.full.clone());
        rec.tcr_b = Some(beta.full.clone());
        let [a1, a2, a3] = alpha.cdrs.clone();
        let [b1, b2, b3] = beta.cdrs.clone();
        rec.cdr1a = Some(a1);
        rec.cdr2a = Some(a2);
        rec.cdr3a = Some(a3);
        rec.cdr1b = Some(b1);
        rec.cdr2b = Some(b2);
        rec.cdr3b = Some(b3);
        let class_ii = rng.gen_bool(0.3);
        rec.mhc_class = if class_ii { MhcClass::II } else { MhcClass::I };
        rec.mhc_allele = Some(
            if class_ii {
                *alleles_ii.choose(&mut rng).unwrap()
            } else {
                *alleles_i.choose(&mut rng).unwrap()
            }
            .to_string(),
        );
        rec.va = Some(format!("TRAV{}", rng.gen_range(1..6)));
        rec.ja = Some(format!("TRAJ{}", rng.gen_range(1..4)));
        rec.vb = Some(format!("TRBV{}", rng.gen_range(1..6)));
        rec.jb = Some(format!("TRBJ{}", rng.gen_range(1..4)));
        rec.species = Some("synthetic".into());

        let m = cfg.motif_len;
        let j = cfg.jitter;
        let e_contact = e_at..e_at + m;
        let a_contact = alpha.cdr3_offset + alpha.motif_at..alpha.cdr3_offset + alpha.motif_at + m;
        let b_contact = beta.cdr3_offset + beta.motif_at..beta.cdr3_offset + beta.motif_at + m;
        let mut d: BTreeMap<Modality, BTreeMap<Modality, Vec<Option<f64>>>> = BTreeMap::new();
        let mut put = |rng: &mut ChaCha8Rng,
                       m_: Modality,
                       p: Modality,
                       len: usize,
                       c: std::ops::Range<usize>| {
            d.entry(m_)
                .or_default()
                .insert(p, distances(rng, len, c, j));
        };
        for partner in [
            Modality::TcrA,
            Modality::TcrB,
            Modality::Cdr3a,
            Modality::Cdr3b,
        ] {
            put(
                &mut rng,
                Modality::Epitope,
                partner,
                cfg.epitope_len,
                e_contact.clone(),
            );
        }
        put(
            &mut rng,
            Modality::TcrA,
            Modality::Epitope,
            cfg.chain_len,
            a_contact,
        );
        put(
            &mut rng,
            Modality::TcrB,
            Modality::Epitope,
            cfg.chain_len,
            b_contact,
        );
        put(
            &mut rng,
            Modality::Cdr3a,
            Modality::Epitope,
            cfg.cdr3_len,
            alpha.motif_at..alpha.motif_at + m,
        );
        put(
            &mut rng,
            Modality::Cdr3b,
            Modality::Epitope,
            cfg.cdr3_len,
            beta.motif_at..beta.motif_at + m,
        );
        ground_truth.push(DistanceGroundTruth {
            record_id: rec.record_id.clone(),
            distances: d,
        });
        records.push(rec);
    }
    Ok(SyntheticDataset {
        records,
        ground_truth,
        motifs,
    })
}
