use super::MetaType;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    /// Comparison-level operators bind looser than `+` and are
    /// left-associative among themselves.
    pub fn is_comparison_level(self) -> bool {
        !matches!(self, BinOp::Add)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(u32),
    Str(String),
    Var(VarId),
    /// Elements are number atoms.
    List(Vec<Expr>),
    Index { target: VarId, index: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Define { var: VarId, value: Expr },
    Assign { var: VarId, value: Expr },
    Print(Expr),
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
}

/// A single-function program in dialect-neutral form.
///
/// Annotation sites are numbered in source order: parameters first, then
/// every `Define`/`Assign` target in a pre-order walk of the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractProgram {
    pub name: String,
    pub vars: Vec<String>,
    pub params: Vec<VarId>,
    pub body: Vec<Stmt>,
    pub site_labels: BTreeMap<usize, MetaType>,
}

impl AbstractProgram {
    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0]
    }

    pub fn statement_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::If { then_body, else_body, .. } => {
                        1 + count(then_body) + else_body.as_deref().map_or(0, count)
                    }
                    Stmt::While { body, .. } => 1 + count(body),
                    _ => 1,
                })
                .sum()
        }
        count(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("variable `{0}` is used before any definition")]
    Undefined(String),
    #[error("type of `{0}` cannot be determined")]
    Undetermined(String),
    #[error("`{var}` defined as {first} but assigned {second}")]
    Conflict { var: String, first: MetaType, second: MetaType },
    #[error("ill-typed expression: {0}")]
    IllTyped(&'static str),
}

/// Recomputes the label of every annotation site from the typing rules:
/// comparisons and logical operators give `Boolean`, numeric literals,
/// indexing and numeric `+` give `number`, string literals and string `+`
/// give `string`, list literals give `list`. Parameter types come from how
/// the body uses them (indexed, used as a condition or logical operand, or
/// added to a value of known type).
pub fn infer_site_labels(p: &AbstractProgram) -> Result<BTreeMap<usize, MetaType>, TypeError> {
    let mut params: BTreeMap<VarId, MetaType> = BTreeMap::new();
    loop {
        let mut cx = Checker { program: p, env: BTreeMap::new(), sites: Vec::new(), reveals: BTreeMap::new() };
        for &v in &p.params {
            cx.env.insert(v, params.get(&v).copied());
        }
        cx.sites.extend(p.params.iter().map(|v| (*v, params.get(v).copied())));
        cx.block(&p.body)?;
        let before = params.len();
        for (v, t) in cx.reveals {
            if p.params.contains(&v) {
                params.entry(v).or_insert(t);
            }
        }
        if params.len() == before {
            let mut out = BTreeMap::new();
            for (i, (v, t)) in cx.sites.into_iter().enumerate() {
                let t = t.ok_or_else(|| TypeError::Undetermined(p.var_name(v).to_string()))?;
                out.insert(i, t);
            }
            return Ok(out);
        }
    }
}

struct Checker<'a> {
    program: &'a AbstractProgram,
    /// `None` marks a parameter whose type is not yet known.
    env: BTreeMap<VarId, Option<MetaType>>,
    sites: Vec<(VarId, Option<MetaType>)>,
    reveals: BTreeMap<VarId, MetaType>,
}

impl Checker<'_> {
    fn block(&mut self, stmts: &[Stmt]) -> Result<(), TypeError> {
        for s in stmts {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), TypeError> {
        match s {
            Stmt::Define { var, value } => {
                let t = self.expr(value)?;
                self.env.insert(*var, t);
                self.sites.push((*var, t));
            }
            Stmt::Assign { var, value } => {
                let t = self.expr(value)?;
                let prev = self.lookup(*var)?;
                if let (Some(a), Some(b)) = (prev, t) {
                    if a != b {
                        return Err(TypeError::Conflict {
                            var: self.program.var_name(*var).to_string(),
                            first: a,
                            second: b,
                        });
                    }
                }
                self.sites.push((*var, prev.or(t)));
            }
            Stmt::Print(e) => {
                self.expr(e)?;
            }
            Stmt::If { cond, then_body, else_body } => {
                self.condition(cond)?;
                self.block(then_body)?;
                if let Some(b) = else_body {
                    self.block(b)?;
                }
            }
            Stmt::While { cond, body } => {
                self.condition(cond)?;
                self.block(body)?;
            }
        }
        Ok(())
    }

    fn condition(&mut self, e: &Expr) -> Result<(), TypeError> {
        self.reveal(e, MetaType::Boolean);
        match self.expr(e)? {
            Some(MetaType::Boolean) | None => Ok(()),
            Some(_) => Err(TypeError::IllTyped("non-Boolean condition")),
        }
    }

    fn lookup(&self, v: VarId) -> Result<Option<MetaType>, TypeError> {
        self.env
            .get(&v)
            .copied()
            .ok_or_else(|| TypeError::Undefined(self.program.var_name(v).to_string()))
    }

    fn reveal(&mut self, e: &Expr, t: MetaType) {
        if let Expr::Var(v) = e {
            if matches!(self.env.get(v), Some(None)) {
                self.reveals.entry(*v).or_insert(t);
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Option<MetaType>, TypeError> {
        Ok(match e {
            Expr::Num(_) => Some(MetaType::Number),
            Expr::Str(_) => Some(MetaType::String),
            Expr::Var(v) => self.lookup(*v)?,
            Expr::List(items) => {
                for it in items {
                    if self.expr(it)? == Some(MetaType::Number) {
                        continue;
                    }
                    self.reveal(it, MetaType::Number);
                }
                Some(MetaType::List)
            }
            Expr::Index { target, index } => {
                let target_expr = Expr::Var(*target);
                self.reveal(&target_expr, MetaType::List);
                match self.lookup(*target)? {
                    Some(MetaType::List) | None => {}
                    Some(_) => return Err(TypeError::IllTyped("indexing a non-list")),
                }
                self.reveal(index, MetaType::Number);
                self.expr(index)?;
                Some(MetaType::Number)
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs)?;
                let r = self.expr(rhs)?;
                match op {
                    BinOp::Add => {
                        let t = l.or(r);
                        if let (Some(a), Some(b)) = (l, r) {
                            if a != b {
                                return Err(TypeError::IllTyped("mixed-type addition"));
                            }
                        }
                        if let Some(t) = t {
                            if !matches!(t, MetaType::Number | MetaType::String) {
                                return Err(TypeError::IllTyped("addition of non-scalars"));
                            }
                            self.reveal(lhs, t);
                            self.reveal(rhs, t);
                        }
                        t
                    }
                    BinOp::Eq | BinOp::Ne => Some(MetaType::Boolean),
                    BinOp::And | BinOp::Or => {
                        self.reveal(lhs, MetaType::Boolean);
                        self.reveal(rhs, MetaType::Boolean);
                        Some(MetaType::Boolean)
                    }
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prog(vars: &[&str], params: Vec<VarId>, body: Vec<Stmt>) -> AbstractProgram {
        AbstractProgram {
            name: "f".into(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            params,
            body,
            site_labels: BTreeMap::new(),
        }
    }

    #[test]
    fn comparison_defines_boolean() {
        let p = prog(
            &["a"],
            vec![],
            vec![Stmt::Define { var: VarId(0), value: Expr::binary(BinOp::Ne, Expr::Num(1), Expr::Num(2)) }],
        );
        assert_eq!(infer_site_labels(&p).unwrap()[&0], MetaType::Boolean);
    }

    #[test]
    fn parameter_type_comes_from_later_use() {
        // def f(p, q): let a = q + 'x'; let b = p[0]
        let p = prog(
            &["p", "q", "a", "b"],
            vec![VarId(0), VarId(1)],
            vec![
                Stmt::Define {
                    var: VarId(2),
                    value: Expr::binary(BinOp::Add, Expr::Var(VarId(1)), Expr::Str("x".into())),
                },
                Stmt::Define { var: VarId(3), value: Expr::Index { target: VarId(0), index: Box::new(Expr::Num(0)) } },
            ],
        );
        let labels = infer_site_labels(&p).unwrap();
        assert_eq!(labels[&0], MetaType::List);
        assert_eq!(labels[&1], MetaType::String);
        assert_eq!(labels[&2], MetaType::String);
        assert_eq!(labels[&3], MetaType::Number);
    }

    #[test]
    fn unused_parameter_is_undetermined() {
        let p = prog(&["p"], vec![VarId(0)], vec![Stmt::Print(Expr::Num(1))]);
        assert!(matches!(infer_site_labels(&p), Err(TypeError::Undetermined(_))));
    }

    #[test]
    fn conflicting_reassignment_is_rejected() {
        let p = prog(
            &["a"],
            vec![],
            vec![
                Stmt::Define { var: VarId(0), value: Expr::Num(1) },
                Stmt::Assign { var: VarId(0), value: Expr::Str("s".into()) },
            ],
        );
        assert!(matches!(infer_site_labels(&p), Err(TypeError::Conflict { .. })));
    }
}
