use super::cfg::{Cfg, DefSite};
use super::reaching::ReachingDefinitions;
use crate::frontend::{Ast, NodeId, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Distance sentinel for "not connected".
pub const INF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("node {0} is not part of the tree")]
    NotInTree(usize),
    #[error("nodes {0} and {1} do not share a root")]
    DisjointTrees(usize, usize),
}

/// The AST annotated with use-to-definition edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tcg {
    /// Terminal node of each token.
    pub terminals: Vec<NodeId>,
    pub nonterminals: Vec<NodeId>,
    /// (parent, child) pairs.
    pub ast_edges: Vec<(NodeId, NodeId)>,
    /// (use token, definition token) pairs.
    pub rda_edges: BTreeSet<(usize, usize)>,
    parent: Vec<Option<NodeId>>,
    depth: Vec<u32>,
}

impl Tcg {
    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }

    /// LCA distance between two tokens.
    pub fn lca_distance(&self, i: usize, j: usize) -> u32 {
        hops(|n| self.parent[n.0], |n| self.depth[n.0], self.terminals[i], self.terminals[j])
    }
}

pub fn build_tcg(ast: &Ast, cfg: &Cfg, rd: &ReachingDefinitions) -> Tcg {
    let mut rda_edges = BTreeSet::new();
    for (&use_token, defs) in &rd.uses {
        for &d in defs {
            match cfg.definitions[d].site {
                DefSite::Parameter(t) => {
                    rda_edges.insert((use_token, t));
                }
                DefSite::Statement(s) => {
                    rda_edges.extend(ast.terminals_under(s).into_iter().map(|t| (use_token, t)));
                }
            }
        }
    }
    let mut nonterminals = Vec::new();
    let mut ast_edges = Vec::new();
    let mut parent = Vec::with_capacity(ast.len());
    let mut depth = vec![0u32; ast.len()];
    for id in (0..ast.len()).map(NodeId) {
        let node = ast.node(id);
        if matches!(node.kind, NodeKind::NonTerminal(_)) {
            nonterminals.push(id);
        }
        ast_edges.extend(node.children.iter().map(|c| (id, *c)));
        parent.push(node.parent);
    }
    // Children are allocated before their parents, so walk from the root down.
    for id in (0..ast.len()).rev() {
        if let Some(p) = parent[id] {
            depth[id] = depth[p.0] + 1;
        }
    }
    let terminals = (0..ast.terminal_count()).map(|i| ast.terminal(i)).collect();
    Tcg { terminals, nonterminals, ast_edges, rda_edges, parent, depth }
}

/// Number of edges from `a` up to the lowest common ancestor of `a` and `b`.
pub fn d_lca(ast: &Ast, a: NodeId, b: NodeId) -> Result<u32, AnalysisError> {
    for n in [a, b] {
        if n.0 >= ast.len() {
            return Err(AnalysisError::NotInTree(n.0));
        }
    }
    let root_of = |mut n: NodeId| {
        while let Some(p) = ast.parent(n) {
            n = p;
        }
        n
    };
    if root_of(a) != root_of(b) {
        return Err(AnalysisError::DisjointTrees(a.0, b.0));
    }
    Ok(hops(|n| ast.parent(n), |n| ast.depth(n) as u32, a, b))
}

fn hops(parent: impl Fn(NodeId) -> Option<NodeId>, depth: impl Fn(NodeId) -> u32, a: NodeId, b: NodeId) -> u32 {
    let (mut x, mut y) = (a, b);
    let (mut dx, mut dy) = (depth(a), depth(b));
    let mut up = 0;
    while dx > dy {
        x = parent(x).expect("depth implies a parent");
        dx -= 1;
        up += 1;
    }
    while dy > dx {
        y = parent(y).expect("depth implies a parent");
        dy -= 1;
    }
    while x != y {
        x = parent(x).expect("distinct nodes at equal depth have parents");
        y = parent(y).expect("distinct nodes at equal depth have parents");
        up += 1;
    }
    up
}

/// 1 when a use-to-definition edge joins the two tokens, `INF` otherwise.
pub fn d_rda(tcg: &Tcg, i: usize, j: usize) -> u32 {
    if tcg.rda_edges.contains(&(i, j)) {
        1
    } else {
        INF
    }
}

/// Dense token-by-token distance matrix; `INF` marks unconnected pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<Cell>>", try_from = "Vec<Vec<Cell>>")]
pub struct VtcMatrix {
    n: usize,
    data: Vec<u32>,
}

impl VtcMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> u32) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        VtcMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Wraps the matrix with one leading and one trailing special position.
    /// Specials are at distance 0 from themselves and `INF` from everything
    /// else.
    pub fn framed(&self) -> VtcMatrix {
        let m = self.n + 2;
        VtcMatrix::from_fn(m, |i, j| {
            let inner = |k: usize| k >= 1 && k <= self.n;
            if inner(i) && inner(j) {
                self.get(i - 1, j - 1)
            } else if i == j {
                0
            } else {
                INF
            }
        })
    }

    /// Places `a` and `b` on the diagonal with `INF` between them.
    pub fn block_diagonal(a: &VtcMatrix, b: &VtcMatrix) -> VtcMatrix {
        VtcMatrix::from_fn(a.n + b.n, |i, j| match (i < a.n, j < a.n) {
            (true, true) => a.get(i, j),
            (false, false) => b.get(i - a.n, j - a.n),
            _ => INF,
        })
    }

    /// Keeps rows and columns in `keep`, in the given order.
    pub fn select(&self, keep: &[usize]) -> VtcMatrix {
        VtcMatrix::from_fn(keep.len(), |i, j| self.get(keep[i], keep[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Finite(u32),
    Word(String),
}

impl From<VtcMatrix> for Vec<Vec<Cell>> {
    fn from(m: VtcMatrix) -> Self {
        (0..m.n)
            .map(|i| m.row(i).iter().map(|&d| if d == INF { Cell::Word("inf".into()) } else { Cell::Finite(d) }).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<Cell>>> for VtcMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<Cell>>) -> Result<Self, Self::Error> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            for cell in row {
                data.push(match cell {
                    Cell::Finite(d) if d != INF => d,
                    Cell::Word(w) if w == "inf" => INF,
                    other => return Err(format!("invalid distance {other:?} in row {i}")),
                });
            }
        }
        Ok(VtcMatrix { n, data })
    }
}

/// Entry (i, j) is the smaller of the LCA and RDA distances.
pub fn vtc_matrix(tcg: &Tcg) -> VtcMatrix {
    VtcMatrix::from_fn(tcg.len(), |i, j| tcg.lca_distance(i, j).min(d_rda(tcg, i, j)))
}
