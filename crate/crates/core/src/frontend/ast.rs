use super::lexer::Token;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Dialect-neutral production labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Production {
    Program,
    Def,
    Define,
    Assign,
    Print,
    If,
    Else,
    While,
    Binary,
    List,
    Index,
}

impl Production {
    pub fn label(self) -> &'static str {
        match self {
            Production::Program => "program",
            Production::Def => "def",
            Production::Define => "define",
            Production::Assign => "assign",
            Production::Print => "print",
            Production::If => "if",
            Production::Else => "else",
            Production::While => "while",
            Production::Binary => "binary",
            Production::List => "list",
            Production::Index => "index",
        }
    }

    pub fn is_statement(self) -> bool {
        matches!(
            self,
            Production::Define | Production::Assign | Production::Print | Production::If | Production::While
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Owns the token at this index.
    Terminal(usize),
    NonTerminal(Production),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Arena AST in which every token is a terminal leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: NodeId,
    pub(crate) terminals: Vec<NodeId>,
    pub(crate) tokens: Vec<Token>,
}

impl Ast {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Terminal node of token `index`.
    pub fn terminal(&self, index: usize) -> NodeId {
        self.terminals[index]
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn production(&self, id: NodeId) -> Option<Production> {
        match self.nodes[id.0].kind {
            NodeKind::NonTerminal(p) => Some(p),
            NodeKind::Terminal(_) => None,
        }
    }

    pub fn token_of(&self, id: NodeId) -> Option<&Token> {
        match self.nodes[id.0].kind {
            NodeKind::Terminal(i) => Some(&self.tokens[i]),
            NodeKind::NonTerminal(_) => None,
        }
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(id) {
            d += 1;
            id = p;
        }
        d
    }

    /// Token indices of the terminals under `id`, left to right.
    pub fn terminals_under(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[n.0].kind {
                NodeKind::Terminal(i) => out.push(i),
                NodeKind::NonTerminal(_) => stack.extend(self.nodes[n.0].children.iter().rev()),
            }
        }
        out
    }

    /// Terminals in depth-first left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        self.terminals_under(self.root)
    }

    /// Same shape and production labels, ignoring terminal spelling.
    pub fn isomorphic(&self, other: &Ast) -> bool {
        fn same(a: &Ast, x: NodeId, b: &Ast, y: NodeId) -> bool {
            let (nx, ny) = (a.node(x), b.node(y));
            let kinds = match (nx.kind, ny.kind) {
                (NodeKind::Terminal(i), NodeKind::Terminal(j)) => i == j,
                (NodeKind::NonTerminal(p), NodeKind::NonTerminal(q)) => p == q,
                _ => false,
            };
            kinds
                && nx.children.len() == ny.children.len()
                && nx.children.iter().zip(&ny.children).all(|(c, d)| same(a, *c, b, *d))
        }
        same(self, self.root, other, other.root)
    }

    /// S-expression rendering; terminals are JSON-quoted.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_sexpr(self.root, &mut out).expect("writing to a String cannot fail");
        out
    }

    fn write_sexpr(&self, id: NodeId, out: &mut String) -> fmt::Result {
        match self.nodes[id.0].kind {
            NodeKind::Terminal(i) => write!(out, "{}", serde_json::Value::String(self.tokens[i].text.clone())),
            NodeKind::NonTerminal(p) => {
                write!(out, "({}", p.label())?;
                for c in &self.nodes[id.0].children {
                    out.push(' ');
                    self.write_sexpr(*c, out)?;
                }
                out.push(')');
                Ok(())
            }
        }
    }
}
