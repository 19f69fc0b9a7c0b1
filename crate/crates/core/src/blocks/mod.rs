//! Transformer building blocks: pre-norm encoder and decoder stacks,
//! MLM and classifier heads, and attention capture for explanations.

mod decoder;
mod encoder;
mod heads;
mod layers;
mod mlm;
mod trace;

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::vocab::Modality;
use crate::error::{Error, Result};
use crate::tensor::{Float, ParamId, ParamStore, Tape, Tensor, Var};

pub use decoder::{Decoder, DecoderLayer};
pub use encoder::{Encoder, EncoderLayer, ModalityBatch};
pub use heads::{ClassifierHead, MlmHead};
pub use layers::{Attention, FeedForward, LayerNorm, Linear};
pub use mlm::{mask_for_mlm, mask_for_mlm_with, IGNORE_INDEX};
pub use trace::{
    collect_traces, AttentionKind, AttentionTrace, CapturePoint, KeySpan, SpanResidues, TraceEntry,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub dropout: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            layers: 2,
            hidden: 128,
            heads: 1,
            ffn_mult: 4,
            dropout: 0.1,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.ffn_mult == 0 {
            return Err(Error::Config(format!("degenerate block config {self:?}")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn ffn_width(&self) -> usize {
        self.hidden * self.ffn_mult
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Registers parameters with deterministic per-name initialisation, so
/// adding a head never perturbs the initial values of other parameters.
pub struct ParamInit<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub seed: u64,
}

impl<'a, T: Float> ParamInit<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        ParamInit { store, seed }
    }

    fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name))
    }

    pub fn uniform(&mut self, name: &str, shape: Vec<usize>, bound: f64) -> Result<ParamId> {
        let mut rng = self.rng(name);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound)))
            .collect();
        self.store.insert(name, Tensor::new(shape, data)?)
    }

    /// Glorot-uniform `[fan_in, fan_out]` matrix.
    pub fn xavier(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(name, vec![fan_in, fan_out], bound)
    }

    pub fn fill(&mut self, name: &str, shape: Vec<usize>, value: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        self.store
            .insert(name, Tensor::new(shape, vec![T::from_f64_lossy(value); n])?)
    }
}

/// One forward pass: the tape, the parameters it reads and the dropout
/// stream. Attention nodes are registered as capture points as they are
/// recorded; reading them back never changes the computation.
pub struct Graph<'s, T: Float> {
    pub tape: Tape<T>,
    pub store: &'s ParamStore<T>,
    pub captures: Vec<CapturePoint>,
    dropout: f64,
    rng: ChaCha8Rng,
}

impl<'s, T: Float> Graph<'s, T> {
    /// Inference graph (dropout off).
    pub fn eval(store: &'s ParamStore<T>) -> Self {
        Self::train(store, 0.0, 0)
    }

    pub fn train(store: &'s ParamStore<T>, dropout: f64, seed: u64) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            captures: Vec::new(),
            dropout,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }

    pub fn dropout(&mut self, x: Var) -> Var {
        let p = self.dropout;
        self.tape.dropout(x, p, &mut self.rng)
    }

    /// Multiplies rows by a 0/1 mask (zeroes padding positions).
    pub fn zero_rows(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let d = self.tape.value(x).last_dim();
        if keep.iter().all(|k| *k) {
            return Ok(x);
        }
        let data = keep
            .iter()
            .flat_map(|k| std::iter::repeat_n(if *k { T::one() } else { T::zero() }, d))
            .collect();
        let m = self.tape.constant(Tensor::new(vec![keep.len(), d], data)?);
        self.tape.mul(x, m)
    }
}

/// Hidden states of one modality pathway for a batch, `[batch * len, hidden]`.
#[derive(Clone, Debug)]
pub struct Stream {
    pub var: Var,
    /// Modality whose positions the rows correspond to.
    pub base: Modality,
    pub batch: usize,
    pub len: usize,
    /// Token validity (`[CLS]` and residues), `batch * len` entries.
    pub mask: Rc<Vec<bool>>,
}

impl Stream {
    /// Row index of each sample's `[CLS]` position.
    pub fn cls_rows(&self) -> Vec<usize> {
        (0..self.batch).map(|b| b * self.len).collect()
    }

    /// Residue count of sample `b` (valid positions after `[CLS]`).
    pub fn residues(&self, b: usize) -> usize {
        self.mask[b * self.len..(b + 1) * self.len]
            .iter()
            .skip(1)
            .filter(|m| **m)
            .count()
    }

    pub fn present(&self, b: usize) -> bool {
        self.mask[b * self.len]
    }
}
