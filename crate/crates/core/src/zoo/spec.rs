use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::blocks::BlockConfig;
use crate::data::record::BindingRecord;
use crate::data::vocab::Modality;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArchId {
    EncConcat,
    Xprobe,
    Egm0,
    Egm1,
    Egm2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossHead {
    Binder,
    MlmEnc,
    MlmDec,
    MhcClass,
    MhcAllele,
    Trvj,
}

impl LossHead {
    pub const ALL: [LossHead; 6] = [
        LossHead::Binder,
        LossHead::MlmEnc,
        LossHead::MlmDec,
        LossHead::MhcClass,
        LossHead::MhcAllele,
        LossHead::Trvj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossHead::Binder => "BINDER",
            LossHead::MlmEnc => "MLM_ENC",
            LossHead::MlmDec => "MLM_DEC",
            LossHead::MhcClass => "MHC_CLASS",
            LossHead::MhcAllele => "MHC_ALLELE",
            LossHead::Trvj => "TRVJ",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    AToB,
    BToA,
    Bidir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExtraFeatures {
    None,
    Query,
    Attended,
}

/// Whether EGM-1/2 epitope decoders query the chain-enriched outputs or the
/// raw chain encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EpitopeQueries {
    #[default]
    Enriched,
    Raw,
}

/// One decoder: `query` attends to the concatenation of `keys`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub name: String,
    pub query: String,
    pub keys: Vec<String>,
    pub output: String,
}

impl DecoderSpec {
    pub fn new(name: &str, query: &str, keys: &[&str], output: &str) -> Self {
        DecoderSpec {
            name: name.into(),
            query: query.into(),
            keys: keys.iter().map(|k| k.to_string()).collect(),
            output: output.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub a: Modality,
    pub b: Modality,
    pub direction: Direction,
    pub extra: ExtraFeatures,
}

/// Declarative architecture identity, frozen into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub arch_id: ArchId,
    pub modalities: Vec<Modality>,
    pub wiring: Vec<DecoderSpec>,
    pub classifier_inputs: Vec<String>,
    pub loss_heads: BTreeSet<LossHead>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egm1_epitope_queries: Option<EpitopeQueries>,
    #[serde(default)]
    pub block: BlockConfig,
    /// Token length per modality (including `[CLS]`); missing entries use
    /// the modality default.
    #[serde(default)]
    pub max_len: BTreeMap<Modality, usize>,
    /// Add the cross-attention output to the query stream instead of
    /// replacing it.
    #[serde(default)]
    pub cross_residual: bool,
    #[serde(default)]
    pub mlm_tied: bool,
    /// Declared modalities a record may lack (encoded as all-padding).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub optional: BTreeSet<Modality>,
}

fn default_heads() -> BTreeSet<LossHead> {
    [LossHead::Binder, LossHead::MlmEnc].into_iter().collect()
}

impl ArchitectureSpec {
    fn base(arch_id: ArchId, modalities: Vec<Modality>) -> Self {
        ArchitectureSpec {
            arch_id,
            modalities,
            wiring: Vec::new(),
            classifier_inputs: Vec::new(),
            loss_heads: default_heads(),
            probe: None,
            egm1_epitope_queries: None,
            block: BlockConfig::default(),
            max_len: BTreeMap::new(),
            cross_residual: false,
            mlm_tied: false,
            optional: BTreeSet::new(),
        }
    }

    /// One encoder per modality; the classifier reads every `[CLS]`.
    pub fn enc_concat(modalities: &[Modality]) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Spec("enc-concat needs at least one modality".into()));
        }
        let mut s = Self::base(ArchId::EncConcat, modalities.to_vec());
        s.classifier_inputs = modalities.iter().map(|m| m.name().to_string()).collect();
        s.validate()?;
        Ok(s)
    }

    pub fn enc_concat_named(names: &[&str]) -> Result<Self> {
        let mods = names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<Vec<Modality>>>()?;
        Self::enc_concat(&mods)
    }

    /// Directional cross-attention probe between two modalities.
    pub fn xprobe(
        a: Modality,
        b: Modality,
        direction: Direction,
        extra: ExtraFeatures,
    ) -> Result<Self> {
        if a == b {
            return Err(Error::Spec("probe needs two distinct modalities".into()));
        }
        let (an, bn) = (a.name(), b.name());
        let mut s = Self::base(ArchId::Xprobe, vec![a, b]);
        s.probe = Some(ProbeSpec {
            a,
            b,
            direction,
            extra,
        });
        let ab = format!("{an}->{bn}");
        let ba = format!("{bn}->{an}");
        let (query, attended) = match direction {
            Direction::AToB => {
                s.wiring.push(DecoderSpec::new("D1", an, &[bn], &ab));
                s.classifier_inputs.push(ab);
                (an, bn)
            }
            Direction::BToA => {
                s.wiring.push(DecoderSpec::new("D1", bn, &[an], &ba));
                s.classifier_inputs.push(ba);
                (bn, an)
            }
            Direction::Bidir => {
                if extra != ExtraFeatures::None {
                    return Err(Error::Spec(
                        "bidirectional probe takes no extra features".into(),
                    ));
                }
                s.wiring.push(DecoderSpec::new("D1", an, &[bn], &ab));
                s.wiring.push(DecoderSpec::new("D2", bn, &[an], &ba));
                s.classifier_inputs.extend([ab, ba]);
                (an, bn)
            }
        };
        match extra {
            ExtraFeatures::None => {}
            ExtraFeatures::Query => s.classifier_inputs.push(query.to_string()),
            ExtraFeatures::Attended => s.classifier_inputs.push(attended.to_string()),
        }
        s.validate()?;
        Ok(s)
    }

    /// Each modality attends to the concatenation of the other two.
    pub fn egm0() -> Self {
        let mut s = Self::base(
            ArchId::Egm0,
            vec![Modality::TcrA, Modality::TcrB, Modality::Epitope],
        );
        s.wiring = vec![
            DecoderSpec::new("D1", "EPITOPE", &["TCR_A", "TCR_B"], "EPITOPE'"),
            DecoderSpec::new("D2", "TCR_A", &["EPITOPE", "TCR_B"], "TCR_A'"),
            DecoderSpec::new("D3", "TCR_B", &["EPITOPE", "TCR_A"], "TCR_B'"),
        ];
        s.classifier_inputs = vec!["EPITOPE'".into(), "TCR_A'".into(), "TCR_B'".into()];
        s
    }

    /// Chain-to-chain enrichment, then epitope<->chain decoders.
    pub fn egm1(queries: EpitopeQueries) -> Self {
        Self::egm_chain_first(ArchId::Egm1, queries, false)
    }

    /// As EGM-1, with the chain->epitope decoders also attending to the
    /// complementary enriched chain.
    pub fn egm2(queries: EpitopeQueries) -> Self {
        Self::egm_chain_first(ArchId::Egm2, queries, true)
    }

    fn egm_chain_first(arch_id: ArchId, queries: EpitopeQueries, complementary: bool) -> Self {
        let mut s = Self::base(
            arch_id,
            vec![Modality::TcrA, Modality::TcrB, Modality::Epitope],
        );
        s.egm1_epitope_queries = Some(queries);
        let (ka, kb) = match queries {
            EpitopeQueries::Enriched => ("TCR_A'", "TCR_B'"),
            EpitopeQueries::Raw => ("TCR_A", "TCR_B"),
        };
        let (d5_keys, d6_keys): (Vec<&str>, Vec<&str>) = if complementary {
            (vec!["EPITOPE", "TCR_B'"], vec!["EPITOPE", "TCR_A'"])
        } else {
            (vec!["EPITOPE"], vec!["EPITOPE"])
        };
        s.wiring = vec![
            DecoderSpec::new("D1", "TCR_A", &["TCR_B"], "TCR_A'"),
            DecoderSpec::new("D2", "TCR_B", &["TCR_A"], "TCR_B'"),
            DecoderSpec::new("D3", "EPITOPE", &[ka], "EPITOPE@A"),
            DecoderSpec::new("D4", "EPITOPE", &[kb], "EPITOPE@B"),
            DecoderSpec::new("D5", "TCR_A'", &d5_keys, "TCR_A''"),
            DecoderSpec::new("D6", "TCR_B'", &d6_keys, "TCR_B''"),
        ];
        s.classifier_inputs = ["EPITOPE@A", "EPITOPE@B", "TCR_A''", "TCR_B''"]
            .map(String::from)
            .to_vec();
        s
    }

    pub fn with_block(mut self, block: BlockConfig) -> Self {
        self.block = block;
        self
    }

    pub fn with_loss_heads(mut self, heads: &[LossHead]) -> Self {
        self.loss_heads = heads.iter().copied().collect();
        self
    }

    pub fn with_max_len(mut self, modality: Modality, len: usize) -> Self {
        self.max_len.insert(modality, len);
        self
    }

    /// Sets each declared modality's length to the longest sequence in
    /// `records` plus `[CLS]`.
    pub fn fitted_to(mut self, records: &[BindingRecord]) -> Self {
        for m in self.modalities.clone() {
            let longest = records
                .iter()
                .filter_map(|r| r.sequence(m))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(1);
            self.max_len.insert(m, longest + 1);
        }
        self
    }

    pub fn max_len_of(&self, m: Modality) -> usize {
        self.max_len
            .get(&m)
            .copied()
            .unwrap_or_else(|| m.default_max_len())
    }

    /// Base modality of every source name (a decoder output inherits its
    /// query's base).
    pub fn source_bases(&self) -> Result<BTreeMap<String, Modality>> {
        let mut bases: BTreeMap<String, Modality> = self
            .modalities
            .iter()
            .map(|m| (m.name().to_string(), *m))
            .collect();
        for d in &self.wiring {
            let q = *bases.get(&d.query).ok_or_else(|| {
                Error::Wiring(format!(
                    "decoder {}: unknown or later-declared query {}",
                    d.name, d.query
                ))
            })?;
            for k in &d.keys {
                if !bases.contains_key(k) {
                    return Err(Error::Wiring(format!(
                        "decoder {}: unknown or later-declared key {k}",
                        d.name
                    )));
                }
            }
            if bases.insert(d.output.clone(), q).is_some() {
                return Err(Error::Wiring(format!(
                    "decoder {}: output name {} already used",
                    d.name, d.output
                )));
            }
        }
        Ok(bases)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Spec("no modalities declared".into()));
        }
        let unique: BTreeSet<_> = self.modalities.iter().collect();
        if unique.len() != self.modalities.len() {
            return Err(Error::Spec("duplicate modality".into()));
        }
        let names: BTreeSet<&str> = self.wiring.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.wiring.len() {
            return Err(Error::Wiring("duplicate decoder name".into()));
        }
        for d in &self.wiring {
            if d.keys.is_empty() {
                return Err(Error::Wiring(format!("decoder {} has no keys", d.name)));
            }
        }
        let bases = self.source_bases()?;
        if self.classifier_inputs.is_empty() {
            return Err(Error::Spec("classifier_inputs is empty".into()));
        }
        for c in &self.classifier_inputs {
            if !bases.contains_key(c) {
                return Err(Error::Wiring(format!(
                    "classifier input {c} is not a declared source"
                )));
            }
        }
        if !self.loss_heads.contains(&LossHead::Binder) {
            return Err(Error::Spec("BINDER loss head is mandatory".into()));
        }
        if let Some(m) = self.optional.iter().find(|m| !self.modalities.contains(m)) {
            return Err(Error::Spec(format!(
                "optional modality {m} is not declared"
            )));
        }
        for (m, len) in &self.max_len {
            if *len < 2 {
                return Err(Error::Config(format!("max_len {len} < 2 for {m}")));
            }
        }
        self.block.validate()
    }

    /// Decoders in an order where every source precedes its use.
    pub fn topological_order(&self) -> Result<Vec<&DecoderSpec>> {
        self.source_bases()?;
        Ok(self.wiring.iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_rows_are_the_seven_reachable_configurations() {
        let (a, b) = (Modality::Epitope, Modality::Cdr3b);
        let mut rows = Vec::new();
        for dir in [Direction::AToB, Direction::BToA, Direction::Bidir] {
            for extra in [
                ExtraFeatures::None,
                ExtraFeatures::Query,
                ExtraFeatures::Attended,
            ] {
                if let Ok(s) = ArchitectureSpec::xprobe(a, b, dir, extra) {
                    rows.push(s.classifier_inputs.join(" + "));
                }
            }
        }
        assert_eq!(
            rows,
            vec![
                "EPITOPE->CDR3B",
                "EPITOPE->CDR3B + EPITOPE",
                "EPITOPE->CDR3B + CDR3B",
                "CDR3B->EPITOPE",
                "CDR3B->EPITOPE + CDR3B",
                "CDR3B->EPITOPE + EPITOPE",
                "EPITOPE->CDR3B + CDR3B->EPITOPE",
            ]
        );
    }

    #[test]
    fn wiring_must_reference_declared_sources() {
        let mut s = ArchitectureSpec::egm1(EpitopeQueries::Enriched);
        s.wiring.swap(0, 4);
        assert!(matches!(s.validate(), Err(Error::Wiring(_))));
        let mut s = ArchitectureSpec::egm0();
        s.loss_heads.remove(&LossHead::Binder);
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
        assert!(matches!(
            ArchitectureSpec::enc_concat_named(&["CDR4B"]),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn egm2_differs_from_egm1_only_in_d5_d6_keys() {
        let e1 = ArchitectureSpec::egm1(EpitopeQueries::Enriched);
        let mut e2 = ArchitectureSpec::egm2(EpitopeQueries::Enriched);
        e2.wiring[4].keys = vec!["EPITOPE".into()];
        e2.wiring[5].keys = vec!["EPITOPE".into()];
        e2.arch_id = ArchId::Egm1;
        assert_eq!(e1, e2);
    }

    #[test]
    fn json_round_trip() {
        for s in [
            ArchitectureSpec::egm0(),
            ArchitectureSpec::egm1(EpitopeQueries::Raw),
            ArchitectureSpec::egm2(EpitopeQueries::Enriched),
            ArchitectureSpec::xprobe(
                Modality::Epitope,
                Modality::Cdr3b,
                Direction::AToB,
                ExtraFeatures::Attended,
            )
            .unwrap(),
        ] {
            let text = serde_json::to_string(&s).unwrap();
            let back: ArchitectureSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
        }
    }
}
