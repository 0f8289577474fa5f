//! Synthetic labeled programs in two dialects.
//!
//! A program is generated once in abstract form ([`AbstractProgram`]) and then
//! rendered into either dialect. The abstract form carries the ground-truth
//! meta-type of every annotation site (variable definitions, reassignments
//! and function parameters), which rendering maps onto token positions.

mod generate;
mod io;
mod program;
mod render;
mod split;

pub use generate::{generate_abstract, generate_corpus, generate_program, program_seed, GenConfig, Profile};
pub use io::{parse_record, read_dataset, write_dataset, DatasetError, DatasetRecord};
pub use program::{infer_site_labels, AbstractProgram, BinOp, Expr, Stmt, TypeError, VarId};
pub use render::{render, RenderError, Rendered};
pub use split::{split_dataset, DatasetManifest, Split, SplitError, SplitMode};

use crate::dialect::Dialect;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// The closed label vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaType {
    #[serde(rename = "Boolean")]
    Boolean,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "string")]
    String,
    #[serde(rename = "list")]
    List,
}

impl MetaType {
    pub const ALL: [MetaType; 4] = [MetaType::Boolean, MetaType::Number, MetaType::String, MetaType::List];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<MetaType> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetaType::Boolean => "Boolean",
            MetaType::Number => "number",
            MetaType::String => "string",
            MetaType::List => "list",
        }
    }
}

impl fmt::Display for MetaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetaType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetaType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown meta-type `{s}`"))
    }
}

/// A rendered program with labels at its annotation sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledProgram {
    pub id: u64,
    pub profile: u32,
    pub dialect: Dialect,
    pub tokens: Vec<String>,
    /// Token index → ground-truth meta-type.
    pub labels: BTreeMap<usize, MetaType>,
}

impl LabeledProgram {
    /// Source text with single spaces between tokens; lexes back to `tokens`.
    pub fn source(&self) -> String {
        self.tokens.join(" ")
    }
}
