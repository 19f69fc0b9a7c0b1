//! Architecture specifications and the parameterized model graphs built
//! from them.

pub mod graph;
pub mod spec;

pub use graph::{AuxHead, ForwardOutput, InputBatch, ModelGraph, Prediction, TokenizedRecord};
pub use spec::{
    ArchId, ArchitectureSpec, DecoderSpec, Direction, EpitopeQueries, ExtraFeatures, LossHead,
    ProbeSpec,
};
