//! Cross-dialect statistical type inference.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] generates labeled synthetic programs in two surface dialects,
//! * [`frontend`] lexes and parses them into a dialect-neutral AST and assigns
//!   unified meta-grammar tags,
//! * [`analysis`] runs reaching definitions and builds the variable type
//!   closeness (VTC) distance matrix,
//! * [`tensor`] is a small reverse-mode autodiff engine,
//! * [`model`] is the transformer encoder with kernelized attention,
//! * [`train`] holds pretraining, fine-tuning and the experiment drivers,
//! * [`infer`] does prediction, ensembling and metrics.

pub mod analysis;
pub mod corpus;
pub mod dialect;
pub mod frontend;
pub mod infer;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use corpus::{LabeledProgram, MetaType};
pub use dialect::Dialect;
