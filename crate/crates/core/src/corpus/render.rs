use super::program::{AbstractProgram, BinOp, Expr, Stmt};
use super::MetaType;
use crate::dialect::{self, Dialect, Surface};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("unsupported construct: {0}")]
    Unsupported(&'static str),
    #[error("annotation site {0} has no label")]
    MissingLabel(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub tokens: Vec<String>,
    /// Token position of each annotation site, in site order.
    pub site_positions: Vec<usize>,
    pub labels: BTreeMap<usize, MetaType>,
}

/// Renders `p` as a token sequence in `dialect`.
///
/// Both dialects emit the same number of tokens for every construct, so a
/// site lands on the same position in either rendering. A program with no
/// parameters and no statements renders as the empty sequence.
pub fn render(p: &AbstractProgram, dialect: Dialect) -> Result<Rendered, RenderError> {
    let mut r = Renderer { p, dialect, tokens: Vec::new(), sites: Vec::new() };
    if !(p.params.is_empty() && p.body.is_empty()) {
        r.function()?;
    }
    let mut labels = BTreeMap::new();
    for (i, &pos) in r.sites.iter().enumerate() {
        let t = p.site_labels.get(&i).copied().ok_or(RenderError::MissingLabel(i))?;
        labels.insert(pos, t);
    }
    Ok(Rendered { tokens: r.tokens, site_positions: r.sites, labels })
}

struct Renderer<'a> {
    p: &'a AbstractProgram,
    dialect: Dialect,
    tokens: Vec<String>,
    sites: Vec<usize>,
}

impl Renderer<'_> {
    fn push(&mut self, s: &str) {
        self.tokens.push(s.to_string());
    }

    fn surface(&mut self, s: Surface) {
        let text = self.dialect.spell(s);
        self.push(text);
    }

    fn site(&mut self, name: &str) {
        self.sites.push(self.tokens.len());
        self.push(name);
    }

    fn function(&mut self) -> Result<(), RenderError> {
        let p = self.p;
        self.surface(Surface::Function);
        self.push(&p.name);
        self.push(dialect::LPAREN);
        for (i, v) in p.params.iter().enumerate() {
            if i > 0 {
                self.push(dialect::COMMA);
            }
            self.site(p.var_name(*v));
        }
        self.push(dialect::RPAREN);
        self.block(&p.body)
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), RenderError> {
        self.surface(Surface::BlockOpen);
        for s in body {
            self.stmt(s)?;
        }
        self.surface(Surface::BlockClose);
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), RenderError> {
        let p = self.p;
        match s {
            Stmt::Define { var, value } => {
                self.surface(Surface::Declare);
                self.site(p.var_name(*var));
                self.push(dialect::ASSIGN);
                self.expr(value)?;
                self.push(dialect::SEMI);
            }
            Stmt::Assign { var, value } => {
                self.site(p.var_name(*var));
                self.push(dialect::ASSIGN);
                self.expr(value)?;
                self.push(dialect::SEMI);
            }
            Stmt::Print(e) => {
                self.surface(Surface::Print);
                self.push(dialect::LPAREN);
                self.expr(e)?;
                self.push(dialect::RPAREN);
                self.push(dialect::SEMI);
            }
            Stmt::If { cond, then_body, else_body } => {
                self.push(dialect::IF);
                self.condition(cond)?;
                self.block(then_body)?;
                if let Some(b) = else_body {
                    self.push(dialect::ELSE);
                    self.block(b)?;
                }
            }
            Stmt::While { cond, body } => {
                self.push(dialect::WHILE);
                self.condition(cond)?;
                self.block(body)?;
            }
        }
        Ok(())
    }

    fn condition(&mut self, cond: &Expr) -> Result<(), RenderError> {
        self.push(dialect::LPAREN);
        self.expr(cond)?;
        self.push(dialect::RPAREN);
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<(), RenderError> {
        match e {
            Expr::Num(n) => self.push(&n.to_string()),
            Expr::Str(s) => {
                if s.contains(['\'', '"']) || s.chars().any(char::is_whitespace) {
                    return Err(RenderError::Unsupported("string literal with quotes or whitespace"));
                }
                let q = self.dialect.quote();
                self.push(&format!("{q}{s}{q}"));
            }
            Expr::Var(v) => self.push(self.p.var_name(*v)),
            Expr::List(items) => {
                self.push(dialect::LBRACKET);
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        self.push(dialect::COMMA);
                    }
                    if matches!(it, Expr::Binary { .. }) {
                        return Err(RenderError::Unsupported("operator expression inside list literal"));
                    }
                    self.expr(it)?;
                }
                self.push(dialect::RBRACKET);
            }
            Expr::Index { target, index } => {
                if matches!(**index, Expr::Binary { .. }) {
                    return Err(RenderError::Unsupported("operator expression as index"));
                }
                self.push(self.p.var_name(*target));
                self.push(dialect::LBRACKET);
                self.expr(index)?;
                self.push(dialect::RBRACKET);
            }
            Expr::Binary { op, lhs, rhs } => {
                // there are no grouping parentheses: the tree must already match
                // the left-associative two-level precedence of the parser
                let level = |e: &Expr| match e {
                    Expr::Binary { op, .. } if op.is_comparison_level() => 2,
                    Expr::Binary { .. } => 1,
                    _ => 0,
                };
                let own = if op.is_comparison_level() { 2 } else { 1 };
                if level(lhs) > own {
                    return Err(RenderError::Unsupported("comparison nested under `+`"));
                }
                if level(rhs) >= own {
                    return Err(RenderError::Unsupported("right-nested binary operator"));
                }
                self.expr(lhs)?;
                let spelled = match op {
                    BinOp::Add => dialect::PLUS,
                    BinOp::Eq => self.dialect.spell(Surface::Equal),
                    BinOp::Ne => self.dialect.spell(Surface::NotEqual),
                    BinOp::And => self.dialect.spell(Surface::And),
                    BinOp::Or => self.dialect.spell(Surface::Or),
                };
                self.push(spelled);
                self.expr(rhs)?;
            }
        }
        Ok(())
    }
}
