//! Independent reference implementations. Deliberately naive: they share
//! no code with the library and favor obviousness over speed.

use serde_json::{json, Value};
use tcrlab::data::vocab::VOCAB_SIZE;
use tcrlab::zoo::{ArchitectureSpec, LossHead};

/// Brute-force pair counting: ties count one half.
pub fn auc_oracle(scores: &[(f64, bool)]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for p in scores.iter().filter(|s| s.1) {
        for n in scores.iter().filter(|s| !s.1) {
            pairs += 1.0;
            if p.0 > n.0 {
                wins += 1.0;
            } else if p.0 == n.0 {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Rank by pairwise comparison: `i` is in the top set when fewer than `m`
/// elements precede it.
pub fn hit_rate_oracle(imp: &[f64], dist: &[Option<f64>], t: f64) -> f64 {
    let l = imp.len();
    let m = ((t * l as f64).ceil() as usize).max(1);
    let before_imp = |j: usize, i: usize| imp[j] > imp[i] || (imp[j] == imp[i] && j < i);
    let before_dist = |j: usize, i: usize| match (dist[j], dist[i]) {
        (Some(a), Some(b)) => a < b || (a == b && j < i),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => j < i,
    };
    let top_imp: Vec<bool> = (0..l)
        .map(|i| (0..l).filter(|&j| before_imp(j, i)).count() < m)
        .collect();
    let top_dist: Vec<bool> = (0..l)
        .map(|i| (0..l).filter(|&j| before_dist(j, i)).count() < m)
        .collect();
    (0..l).filter(|&i| top_imp[i] && top_dist[i]).count() as f64 / m as f64
}

/// Zero-padded width-3 box filter.
pub fn conv_oracle(v: &[f64]) -> Vec<f64> {
    let mut padded = vec![0.0];
    padded.extend_from_slice(v);
    padded.push(0.0);
    padded
        .windows(3)
        .map(|w| w[0] / 3.0 + w[1] / 3.0 + w[2] / 3.0)
        .collect()
}

/// Closed-form parameter count, derived from layer shapes alone.
pub fn parameter_count(spec: &ArchitectureSpec) -> usize {
    let b = &spec.block;
    let (d, f, v) = (b.hidden, b.hidden * b.ffn_mult, VOCAB_SIZE);
    let ln = 2 * d;
    let attn = 4 * (d * d + d);
    let ffn = d * f + f + f * d + d;
    let enc_layer = 2 * ln + attn + ffn;
    let dec_layer = 3 * ln + 2 * attn + ffn;
    let mut n = 0;
    for m in &spec.modalities {
        n += v * d + spec.max_len_of(*m) * d + b.layers * enc_layer + ln;
    }
    n += spec.wiring.len() * (b.layers * dec_layer + ln);
    n += spec.classifier_inputs.len() * d * 2 + 2;
    let mlm = d * v + v;
    if spec.loss_heads.contains(&LossHead::MlmEnc) {
        n += spec.modalities.len() * mlm;
    }
    if spec.loss_heads.contains(&LossHead::MlmDec) {
        n += spec.wiring.len() * mlm;
    }
    n
}

pub fn wiring_json(s: &ArchitectureSpec) -> Value {
    json!({"wiring": s.wiring, "classifier_inputs": s.classifier_inputs})
}

pub fn golden_egm0() -> Value {
    json!({
        "wiring": [
            {"name": "D1", "query": "EPITOPE", "keys": ["TCR_A", "TCR_B"], "output": "EPITOPE'"},
            {"name": "D2", "query": "TCR_A", "keys": ["EPITOPE", "TCR_B"], "output": "TCR_A'"},
            {"name": "D3", "query": "TCR_B", "keys": ["EPITOPE", "TCR_A"], "output": "TCR_B'"}
        ],
        "classifier_inputs": ["EPITOPE'", "TCR_A'", "TCR_B'"]
    })
}

pub fn golden_egm1() -> Value {
    json!({
        "wiring": [
            {"name": "D1", "query": "TCR_A", "keys": ["TCR_B"], "output": "TCR_A'"},
            {"name": "D2", "query": "TCR_B", "keys": ["TCR_A"], "output": "TCR_B'"},
            {"name": "D3", "query": "EPITOPE", "keys": ["TCR_A'"], "output": "EPITOPE@A"},
            {"name": "D4", "query": "EPITOPE", "keys": ["TCR_B'"], "output": "EPITOPE@B"},
            {"name": "D5", "query": "TCR_A'", "keys": ["EPITOPE"], "output": "TCR_A''"},
            {"name": "D6", "query": "TCR_B'", "keys": ["EPITOPE"], "output": "TCR_B''"}
        ],
        "classifier_inputs": ["EPITOPE@A", "EPITOPE@B", "TCR_A''", "TCR_B''"]
    })
}

/// EGM-1 with the chain->epitope decoders also reading the other chain.
pub fn golden_egm2() -> Value {
    let mut g = golden_egm1();
    g["wiring"][4]["keys"] = json!(["EPITOPE", "TCR_B'"]);
    g["wiring"][5]["keys"] = json!(["EPITOPE", "TCR_A'"]);
    g
}
