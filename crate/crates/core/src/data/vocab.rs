use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const MASK: usize = 3;
pub const UNK: usize = 4;
pub const NUM_SPECIALS: usize = 5;

/// The 20 canonical amino acids, in id order after the specials.
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";
pub const VOCAB_SIZE: usize = NUM_SPECIALS + 20;

const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];

/// Token alphabet: five specials followed by the canonical residues.
#[derive(Clone, Copy, Debug, Default)]
pub struct Vocabulary;

impl Vocabulary {
    pub fn len(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of a residue letter, or `None` for anything non-canonical.
    pub fn residue_id(&self, c: char) -> Option<usize> {
        AMINO_ACIDS.find(c).map(|i| i + NUM_SPECIALS)
    }

    pub fn token(&self, id: usize) -> Option<String> {
        if id < NUM_SPECIALS {
            Some(SPECIAL_NAMES[id].to_string())
        } else {
            AMINO_ACIDS.chars().nth(id - NUM_SPECIALS).map(String::from)
        }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        if let Some(i) = SPECIAL_NAMES.iter().position(|s| *s == token) {
            return Some(i);
        }
        let mut chars = token.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => self.residue_id(c),
            _ => None,
        }
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < NUM_SPECIALS
    }

    /// Residue letters of `ids`, skipping specials (`[UNK]` renders as `X`).
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&id| match id {
                UNK => Some('X'),
                id if id >= NUM_SPECIALS => AMINO_ACIDS.chars().nth(id - NUM_SPECIALS),
                _ => None,
            })
            .collect()
    }
}

/// One sequence input of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    TcrA,
    TcrB,
    Cdr1a,
    Cdr2a,
    Cdr3a,
    Cdr1b,
    Cdr2b,
    Cdr3b,
    Epitope,
}

impl Modality {
    pub const ALL: [Modality; 9] = [
        Modality::TcrA,
        Modality::TcrB,
        Modality::Cdr1a,
        Modality::Cdr2a,
        Modality::Cdr3a,
        Modality::Cdr1b,
        Modality::Cdr2b,
        Modality::Cdr3b,
        Modality::Epitope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::TcrA => "TCR_A",
            Modality::TcrB => "TCR_B",
            Modality::Cdr1a => "CDR1A",
            Modality::Cdr2a => "CDR2A",
            Modality::Cdr3a => "CDR3A",
            Modality::Cdr1b => "CDR1B",
            Modality::Cdr2b => "CDR2B",
            Modality::Cdr3b => "CDR3B",
            Modality::Epitope => "EPITOPE",
        }
    }

    /// Default maximum token length, including the leading `[CLS]`.
    pub fn default_max_len(self) -> usize {
        match self {
            Modality::TcrA | Modality::TcrB => 141,
            Modality::Epitope => 26,
            _ => 31,
        }
    }

    /// TCR chain the modality belongs to (`'a'` or `'b'`).
    pub fn chain(self) -> Option<char> {
        match self {
            Modality::TcrA | Modality::Cdr1a | Modality::Cdr2a | Modality::Cdr3a => Some('a'),
            Modality::TcrB | Modality::Cdr1b | Modality::Cdr2b | Modality::Cdr3b => Some('b'),
            Modality::Epitope => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Spec(format!("unknown modality {s}")))
    }
}
