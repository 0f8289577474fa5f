//! The cross-dialect encoder, its inputs and its losses.

mod batch;
mod config;
mod encoder;
mod vocab;


pub use batch::{prepare, pretraining_batch, typing_batch, Batch, Domain, Prepared};
pub use config::{DomainWeights, KernelMode, ModelConfig, PretrainCoeffs};
pub use encoder::{rbf_weights, sidecar_path, LossParts, Model, ModelError};
pub use vocab::{Vocab, CLS, MASK, SEP, UNK};

use crate::frontend::MetaTag;

/// Tag id of the sequence-start token.
pub const CLS_TAG: usize = MetaTag::ALL.len();
/// Tag id of the separator token.
pub const SEP_TAG: usize = MetaTag::ALL.len() + 1;
pub const TAG_VOCAB: usize = MetaTag::ALL.len() + 2;
