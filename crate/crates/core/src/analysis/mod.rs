//! Control flow, reaching definitions and type-closeness distances.
//!
//! The type-closeness graph is the AST plus directed edges from each
//! variable use to every token of each definition statement that reaches
//! it. Distances between tokens are the hop count from the first token up
//! to the lowest common ancestor, shortened to 1 along a use-to-definition
//! edge.

mod cfg;
mod reaching;
mod tcg;

pub use cfg::{build_cfg, Cfg, DefId, DefSite, Definition, StatementInfo, Use};
pub use reaching::{reaching_definitions, ReachingDefinitions};
pub use tcg::{build_tcg, d_lca, d_rda, vtc_matrix, AnalysisError, Cell, Tcg, VtcMatrix, INF};

use crate::frontend::Ast;
use serde::{Deserialize, Serialize};

/// Per-program analysis output aligned to token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub vtc: VtcMatrix,
    pub rda_edges: Vec<[usize; 2]>,
}

/// Runs the full pipeline from AST to distance matrix.
pub fn analyze(ast: &Ast) -> (Tcg, VtcMatrix) {
    let cfg = build_cfg(ast);
    let rd = reaching_definitions(&cfg);
    let tcg = build_tcg(ast, &cfg, &rd);
    let vtc = vtc_matrix(&tcg);
    (tcg, vtc)
}

pub fn sidecar(ast: &Ast) -> Sidecar {
    let (tcg, vtc) = analyze(ast);
    Sidecar { n: vtc.len(), vtc, rda_edges: tcg.rda_edges.iter().map(|&(u, d)| [u, d]).collect() }
}
