use crate::frontend::{Ast, NodeId, Production, TokenKind};
use std::collections::{BTreeMap, BTreeSet};

pub type DefId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefSite {
    /// A function parameter, identified by its token index. Parameters reach
    /// the entry block.
    Parameter(usize),
    /// A declaration or assignment statement.
    Statement(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub var: String,
    pub site: DefSite,
}

/// A variable read at token `token`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Use {
    pub token: usize,
    pub var: String,
}

/// Per-statement dataflow facts. For `if` and `while` the statement stands
/// for the evaluation of its condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementInfo {
    pub block: usize,
    pub gen: Option<DefId>,
    pub kill: BTreeSet<DefId>,
    pub uses: Vec<Use>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: Vec<Vec<NodeId>>,
    pub edges: Vec<(usize, usize)>,
    pub entry: usize,
    pub exit: usize,
    pub definitions: Vec<Definition>,
    pub statements: BTreeMap<NodeId, StatementInfo>,
}

impl Cfg {
    pub fn successors(&self, block: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(a, _)| *a == block).map(|(_, b)| *b)
    }

    pub fn predecessors(&self, block: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(_, b)| *b == block).map(|(a, _)| *a)
    }

    /// Definitions live on entry to the function.
    pub fn boundary(&self) -> BTreeSet<DefId> {
        self.definitions
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d.site, DefSite::Parameter(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Blocks in reverse post-order from the entry; unreachable blocks are
    /// appended in index order.
    pub fn reverse_post_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.blocks.len()];
        let mut post = Vec::with_capacity(self.blocks.len());
        let mut stack = vec![(self.entry, false)];
        while let Some((b, done)) = stack.pop() {
            if done {
                post.push(b);
                continue;
            }
            if seen[b] {
                continue;
            }
            seen[b] = true;
            stack.push((b, true));
            let succ: Vec<usize> = self.successors(b).collect();
            for s in succ.into_iter().rev() {
                if !seen[s] {
                    stack.push((s, false));
                }
            }
        }
        post.reverse();
        post.extend((0..self.blocks.len()).filter(|b| !seen[*b]));
        post
    }
}

/// Builds the control-flow graph of the single function in `ast`.
///
/// A statement is appended to the current block; an `if` condition ends its
/// block and branches to a then block, an optional else block and a join
/// block. A `while` condition gets its own header block, which the body
/// loops back to.
pub fn build_cfg(ast: &Ast) -> Cfg {
    let mut b = Builder {
        ast,
        blocks: vec![Vec::new()],
        edges: Vec::new(),
        definitions: Vec::new(),
        pending: Vec::new(),
    };
    let mut exit = 0;
    if let Some(&def) = ast.children(ast.root()).first() {
        for &c in ast.children(def) {
            if let Some(tok) = ast.token_of(c) {
                if tok.kind == TokenKind::Identifier && is_parameter(ast, def, c) {
                    b.definitions.push(Definition { var: tok.text.clone(), site: DefSite::Parameter(tok.index) });
                }
            }
        }
        let body = statements(ast, ast.children(def));
        exit = b.seq(&body, 0);
    }
    let mut statements = BTreeMap::new();
    for (node, block, gen, uses) in b.pending {
        let kill = match gen {
            Some(g) => b
                .definitions
                .iter()
                .enumerate()
                .filter(|(i, d)| *i != g && d.var == b.definitions[g].var)
                .map(|(i, _)| i)
                .collect(),
            None => BTreeSet::new(),
        };
        statements.insert(node, StatementInfo { block, gen, kill, uses });
    }
    Cfg { blocks: b.blocks, edges: b.edges, entry: 0, exit, definitions: b.definitions, statements }
}

/// The function name is the identifier right after the keyword; every other
/// identifier among the function's own terminals is a parameter.
fn is_parameter(ast: &Ast, def: NodeId, node: NodeId) -> bool {
    ast.children(def).get(1) != Some(&node)
}

fn statements(ast: &Ast, children: &[NodeId]) -> Vec<NodeId> {
    children
        .iter()
        .copied()
        .filter(|c| ast.production(*c).is_some_and(Production::is_statement))
        .collect()
}

fn uses_under(ast: &Ast, node: NodeId) -> Vec<Use> {
    ast.terminals_under(node)
        .into_iter()
        .filter_map(|i| {
            let t = &ast.tokens()[i];
            (t.kind == TokenKind::Identifier).then(|| Use { token: i, var: t.text.clone() })
        })
        .collect()
}

struct Builder<'a> {
    ast: &'a Ast,
    blocks: Vec<Vec<NodeId>>,
    edges: Vec<(usize, usize)>,
    definitions: Vec<Definition>,
    pending: Vec<(NodeId, usize, Option<DefId>, Vec<Use>)>,
}

impl Builder<'_> {
    fn new_block(&mut self) -> usize {
        self.blocks.push(Vec::new());
        self.blocks.len() - 1
    }

    fn edge(&mut self, from: usize, to: usize) {
        self.edges.push((from, to));
    }

    fn place(&mut self, node: NodeId, block: usize, gen: Option<DefId>, uses: Vec<Use>) {
        self.blocks[block].push(node);
        self.pending.push((node, block, gen, uses));
    }

    fn seq(&mut self, stmts: &[NodeId], mut cur: usize) -> usize {
        for &s in stmts {
            cur = self.stmt(s, cur);
        }
        cur
    }

    fn stmt(&mut self, s: NodeId, cur: usize) -> usize {
        let ast = self.ast;
        let kids = ast.children(s).to_vec();
        match ast.production(s).expect("statement node") {
            Production::Define | Production::Assign => {
                let (target, value) = if ast.production(s) == Some(Production::Define) { (kids[1], kids[3]) } else { (kids[0], kids[2]) };
                let var = ast.token_of(target).expect("assignment target is a terminal").text.clone();
                self.definitions.push(Definition { var, site: DefSite::Statement(s) });
                let id = self.definitions.len() - 1;
                self.place(s, cur, Some(id), uses_under(ast, value));
                cur
            }
            Production::Print => {
                self.place(s, cur, None, uses_under(ast, kids[2]));
                cur
            }
            Production::If => {
                self.place(s, cur, None, uses_under(ast, kids[2]));
                let then_block = self.new_block();
                self.edge(cur, then_block);
                let then_end = self.seq(&statements(ast, &kids[4..]), then_block);
                let else_node = kids.iter().copied().find(|c| ast.production(*c) == Some(Production::Else));
                let else_end = else_node.map(|e| {
                    let else_block = self.new_block();
                    self.edge(cur, else_block);
                    self.seq(&statements(ast, ast.children(e)), else_block)
                });
                let join = self.new_block();
                self.edge(then_end, join);
                match else_end {
                    Some(end) => self.edge(end, join),
                    None => self.edge(cur, join),
                }
                join
            }
            Production::While => {
                let header = if self.blocks[cur].is_empty() && cur != 0 {
                    cur
                } else {
                    let h = self.new_block();
                    self.edge(cur, h);
                    h
                };
                self.place(s, header, None, uses_under(ast, kids[2]));
                let body = self.new_block();
                self.edge(header, body);
                let body_end = self.seq(&statements(ast, &kids[4..]), body);
                self.edge(body_end, header);
                let after = self.new_block();
                self.edge(header, after);
                after
            }
            other => unreachable!("{other:?} is not a statement"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::Dialect;
    use crate::frontend::parse_source;

    fn cfg(src: &str) -> Cfg {
        build_cfg(&parse_source(src, Dialect::Alpha).unwrap())
    }

    #[test]
    fn straight_line_is_one_block() {
        let g = cfg("def f ( ) : let a = 1 ; a = 2 ; print ( a ) ; end");
        assert_eq!(g.blocks.len(), 1);
        assert_eq!(g.blocks[0].len(), 3);
        assert!(g.edges.is_empty());
        assert_eq!(g.exit, 0);
    }

    #[test]
    fn if_else_is_a_diamond() {
        let g = cfg("def f ( c ) : if ( c ) : let a = 1 ; end else : let a = 2 ; end end");
        assert_eq!(g.blocks.len(), 4);
        assert_eq!(g.edges.len(), 4);
        let join = g.exit;
        assert_eq!(g.predecessors(join).count(), 2);
        assert_eq!(g.successors(g.entry).count(), 2);
    }

    #[test]
    fn while_has_back_edge() {
        let g = cfg("def f ( c ) : let a = 1 ; while ( c ) : a = 2 ; end print ( a ) ; end");
        let header = g.statements.values().find(|s| s.uses.iter().any(|u| u.var == "c")).unwrap().block;
        let body = g.successors(header).min().unwrap();
        assert!(g.edges.contains(&(body, header)));
        assert!(g.edges.contains(&(0, header)));
    }

    #[test]
    fn gen_and_kill() {
        let g = cfg("def f ( a ) : a = 1 ; let b = a ; a = 2 ; end");
        assert_eq!(g.definitions.len(), 4);
        assert_eq!(g.boundary(), BTreeSet::from([0]));
        let first = g.statements.values().find(|s| s.gen == Some(1)).unwrap();
        assert_eq!(first.kill, BTreeSet::from([0, 3]));
    }

    #[test]
    fn every_statement_in_exactly_one_block() {
        let g = cfg("def f ( c ) : while ( c ) : if ( c ) : print ( 1 ) ; end c = 2 ; end end");
        let mut all: Vec<NodeId> = g.blocks.iter().flatten().copied().collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        assert_eq!(n, g.statements.len());
        assert_eq!(g.reverse_post_order().len(), g.blocks.len());
    }
}
