use super::program::{AbstractProgram, BinOp, Expr, Stmt, VarId};
use super::render::render;
use super::{LabeledProgram, MetaType};
use crate::dialect::Dialect;
use crate::rng;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const VAR_NAMES: &[&str] = &[
    "a", "b", "c", "d", "e", "h", "k", "m", "n", "p", "q", "r", "s", "t", "u", "v", "w", "x", "y", "z",
];
const FUNCTION_NAMES: &[&str] = &["f", "g", "run", "main", "calc", "step", "go", "work"];
pub(crate) const STRING_LITERALS: &[&str] = &["a", "b", "ok", "no", "id", "key", "name", "text"];
const MAX_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub min_statements: usize,
    pub max_statements: usize,
    pub max_params: usize,
    /// Number of generator profiles emulating distinct projects.
    pub profiles: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { min_statements: 5, max_statements: 30, max_params: 2, profiles: 8 }
    }
}

impl GenConfig {
    pub fn with_size(min_statements: usize, max_statements: usize) -> Self {
        GenConfig { min_statements, max_statements, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum StmtKind {
    Define,
    Assign,
    Print,
    If,
    While,
}

const STMT_KINDS: [StmtKind; 5] = [StmtKind::Define, StmtKind::Assign, StmtKind::Print, StmtKind::If, StmtKind::While];

/// Statement and type frequencies of one emulated project.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub id: u32,
    pub statement_weights: [f64; 5],
    pub type_weights: [f64; 4],
}

impl Profile {
    pub fn new(id: u32) -> Profile {
        let mut r = rng::stream(0x5EED_0F_9E0F11E, id as u64);
        let mut statement_weights = [0.0; 5];
        for w in statement_weights.iter_mut() {
            *w = 0.5 + 2.0 * r.gen::<f64>();
        }
        // definitions dominate every profile so most programs have several sites
        statement_weights[0] += 2.0;
        let mut type_weights = [0.0; 4];
        for w in type_weights.iter_mut() {
            *w = 0.5 + 2.0 * r.gen::<f64>();
        }
        Profile { id, statement_weights, type_weights }
    }
}

/// Seed of program `index` in a corpus generated from `base_seed`.
pub fn program_seed(base_seed: u64, index: u64) -> u64 {
    rng::derive(base_seed, index)
}

/// Generates the abstract form of the program for `seed`.
pub fn generate_abstract(seed: u64, config: &GenConfig) -> (AbstractProgram, u32) {
    let mut r = rng::stream(seed, 0);
    let profile_id = if config.profiles == 0 { 0 } else { r.gen_range(0..config.profiles) };
    let profile = Profile::new(profile_id);
    let lo = config.min_statements.max(1);
    let hi = config.max_statements.max(lo);
    let budget = r.gen_range(lo..=hi);
    let mut g = Generator::new(r, &profile);
    let program = g.program(budget, config.max_params);
    (program, profile_id)
}

/// Generates and renders one program. Deterministic in `(seed, dialect, config)`.
pub fn generate_program(seed: u64, dialect: Dialect, config: &GenConfig) -> LabeledProgram {
    let (program, profile) = generate_abstract(seed, config);
    let rendered = render(&program, dialect).expect("generator only emits renderable programs");
    LabeledProgram { id: 0, profile, dialect, tokens: rendered.tokens, labels: rendered.labels }
}

/// Generates `n` programs with ids `0..n`, each from its own seed stream.
pub fn generate_corpus(base_seed: u64, n: usize, dialect: Dialect, config: &GenConfig) -> Vec<LabeledProgram> {
    (0..n)
        .map(|i| {
            let mut p = generate_program(program_seed(base_seed, i as u64), dialect, config);
            p.id = i as u64;
            p
        })
        .collect()
}

struct Generator<'p> {
    rng: ChaCha8Rng,
    profile: &'p Profile,
    vars: Vec<String>,
    types: Vec<MetaType>,
    scopes: Vec<Vec<VarId>>,
    free_names: Vec<&'static str>,
    sites: Vec<MetaType>,
    pending_reveals: Vec<VarId>,
}

impl<'p> Generator<'p> {
    fn new(mut rng: ChaCha8Rng, profile: &'p Profile) -> Self {
        let mut free_names = VAR_NAMES.to_vec();
        free_names.shuffle(&mut rng);
        Generator {
            rng,
            profile,
            vars: Vec::new(),
            types: Vec::new(),
            scopes: vec![Vec::new()],
            free_names,
            sites: Vec::new(),
            pending_reveals: Vec::new(),
        }
    }

    fn program(&mut self, budget: usize, max_params: usize) -> AbstractProgram {
        let name = FUNCTION_NAMES.choose(&mut self.rng).unwrap().to_string();
        let n_params = self.rng.gen_range(0..=max_params.min(budget.saturating_sub(1)));
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let t = self.pick_type();
            let v = self.fresh(t).expect("name pool larger than parameter count");
            self.sites.push(t);
            params.push(v);
            self.pending_reveals.push(v);
        }
        self.pending_reveals.shuffle(&mut self.rng);

        let mut body = Vec::new();
        let mut left = budget;
        while left > 0 {
            let pending = self.pending_reveals.len();
            if pending > 0 && (left <= pending || self.rng.gen_bool(pending as f64 / left as f64)) {
                let v = self.pending_reveals.pop().unwrap();
                body.push(self.reveal(v));
                left -= 1;
                continue;
            }
            let (stmt, used) = self.statement(left - pending, 0);
            body.push(stmt);
            left -= used;
        }

        let site_labels: BTreeMap<usize, MetaType> = self.sites.iter().copied().enumerate().collect();
        AbstractProgram { name, vars: self.vars.clone(), params, body, site_labels }
    }

    fn pick_type(&mut self) -> MetaType {
        let idx = WeightedIndex::new(self.profile.type_weights).unwrap().sample(&mut self.rng);
        MetaType::ALL[idx]
    }

    fn fresh(&mut self, t: MetaType) -> Option<VarId> {
        let name = self.free_names.pop()?;
        let v = VarId(self.vars.len());
        self.vars.push(name.to_string());
        self.types.push(t);
        self.scopes.last_mut().unwrap().push(v);
        Some(v)
    }

    fn visible(&self, t: Option<MetaType>) -> Vec<VarId> {
        self.scopes
            .iter()
            .flatten()
            .copied()
            .filter(|v| t.is_none_or(|t| self.types[v.0] == t))
            .collect()
    }

    fn pick_var(&mut self, t: MetaType) -> Option<VarId> {
        self.visible(Some(t)).choose(&mut self.rng).copied()
    }

    /// A statement that pins down the type of parameter `v` from its use.
    fn reveal(&mut self, v: VarId) -> Stmt {
        let value = match self.types[v.0] {
            MetaType::Number => Expr::binary(BinOp::Add, Expr::Var(v), Expr::Num(self.rng.gen_range(0..10))),
            MetaType::String => Expr::binary(BinOp::Add, Expr::Var(v), self.str_lit()),
            MetaType::List => Expr::Index { target: v, index: Box::new(Expr::Num(self.rng.gen_range(0..10))) },
            MetaType::Boolean => {
                let cmp = self.comparison();
                let op = if self.rng.gen_bool(0.5) { BinOp::And } else { BinOp::Or };
                Expr::binary(op, cmp, Expr::Var(v))
            }
        };
        let t = match self.types[v.0] {
            MetaType::List => MetaType::Number,
            other => other,
        };
        match self.fresh(t) {
            Some(target) => {
                self.sites.push(t);
                Stmt::Define { var: target, value }
            }
            None => Stmt::Print(value),
        }
    }

    /// Returns the statement and how many statements it consumed (nested included).
    fn statement(&mut self, budget: usize, depth: usize) -> (Stmt, usize) {
        let mut weights = self.profile.statement_weights;
        if budget < 2 || depth >= MAX_DEPTH {
            weights[3] = 0.0;
            weights[4] = 0.0;
        }
        if self.free_names.is_empty() {
            weights[0] = 0.0;
        }
        if self.visible(None).is_empty() {
            weights[1] = 0.0;
        }
        let kind = STMT_KINDS[WeightedIndex::new(weights).unwrap().sample(&mut self.rng)];
        match kind {
            StmtKind::Define => {
                let t = self.pick_type();
                let value = self.expr(t);
                let var = self.fresh(t).unwrap();
                self.sites.push(t);
                (Stmt::Define { var, value }, 1)
            }
            StmtKind::Assign => {
                let vars = self.visible(None);
                let var = *vars.choose(&mut self.rng).unwrap();
                let t = self.types[var.0];
                let value = self.expr(t);
                self.sites.push(t);
                (Stmt::Assign { var, value }, 1)
            }
            StmtKind::Print => {
                let t = self.pick_type();
                (Stmt::Print(self.expr(t)), 1)
            }
            StmtKind::If => {
                let cond = self.bool_expr();
                let inner = budget - 1;
                let (then_n, else_n) = if inner >= 2 && self.rng.gen_bool(0.5) {
                    let then_n = self.rng.gen_range(1..inner.min(4));
                    let else_n = self.rng.gen_range(1..=(inner - then_n).min(3));
                    (then_n, else_n)
                } else {
                    (self.rng.gen_range(1..=inner.min(4)), 0)
                };
                let then_body = self.block(then_n, depth + 1);
                let else_body = (else_n > 0).then(|| self.block(else_n, depth + 1));
                (Stmt::If { cond, then_body, else_body }, 1 + then_n + else_n)
            }
            StmtKind::While => {
                let cond = self.bool_expr();
                let n = self.rng.gen_range(1..=(budget - 1).min(4));
                let body = self.block(n, depth + 1);
                (Stmt::While { cond, body }, 1 + n)
            }
        }
    }

    fn block(&mut self, budget: usize, depth: usize) -> Vec<Stmt> {
        self.scopes.push(Vec::new());
        let mut out = Vec::new();
        let mut left = budget;
        while left > 0 {
            let (s, used) = self.statement(left, depth);
            out.push(s);
            left -= used;
        }
        // names defined in a branch are not visible afterwards; they are not
        // returned to the pool so each name has a single declaration
        self.scopes.pop();
        out
    }

    fn num_lit(&mut self) -> Expr {
        Expr::Num(self.rng.gen_range(0..10))
    }

    fn str_lit(&mut self) -> Expr {
        Expr::Str(STRING_LITERALS.choose(&mut self.rng).unwrap().to_string())
    }

    fn atom(&mut self, t: MetaType) -> Expr {
        if self.rng.gen_bool(0.5) {
            if let Some(v) = self.pick_var(t) {
                return Expr::Var(v);
            }
        }
        match t {
            MetaType::Number => self.num_lit(),
            MetaType::String => self.str_lit(),
            MetaType::List => Expr::List(vec![self.num_lit()]),
            MetaType::Boolean => self.comparison(),
        }
    }

    fn expr(&mut self, t: MetaType) -> Expr {
        match t {
            MetaType::Number => {
                let list = self.pick_var(MetaType::List);
                let choice = self.rng.gen_range(0..if list.is_some() { 4 } else { 3 });
                match choice {
                    0 => self.num_lit(),
                    1 => self.atom(MetaType::Number),
                    2 => self.sum(MetaType::Number),
                    _ => {
                        let index = self.atom(MetaType::Number);
                        Expr::Index { target: list.unwrap(), index: Box::new(index) }
                    }
                }
            }
            MetaType::String => match self.rng.gen_range(0..3) {
                0 => self.str_lit(),
                1 => self.atom(MetaType::String),
                _ => self.sum(MetaType::String),
            },
            MetaType::List => {
                if self.rng.gen_bool(0.25) {
                    if let Some(v) = self.pick_var(MetaType::List) {
                        return Expr::Var(v);
                    }
                }
                let n = self.rng.gen_range(0..=3);
                Expr::List((0..n).map(|_| self.atom(MetaType::Number)).collect())
            }
            MetaType::Boolean => self.bool_expr(),
        }
    }

    fn sum(&mut self, t: MetaType) -> Expr {
        let terms = self.rng.gen_range(2..=3);
        let mut e = self.atom(t);
        for _ in 1..terms {
            let rhs = self.atom(t);
            e = Expr::binary(BinOp::Add, e, rhs);
        }
        e
    }

    fn comparison(&mut self) -> Expr {
        let t = if self.rng.gen_bool(0.6) { MetaType::Number } else { MetaType::String };
        let lhs = if self.rng.gen_bool(0.3) { self.sum(t) } else { self.atom(t) };
        let rhs = self.atom(t);
        let op = if self.rng.gen_bool(0.5) { BinOp::Eq } else { BinOp::Ne };
        Expr::binary(op, lhs, rhs)
    }

    fn bool_expr(&mut self) -> Expr {
        let bools = self.visible(Some(MetaType::Boolean));
        match self.rng.gen_range(0..4) {
            0 if !bools.is_empty() => Expr::Var(*bools.choose(&mut self.rng).unwrap()),
            1 if !bools.is_empty() => {
                let lhs = if self.rng.gen_bool(0.5) {
                    self.comparison()
                } else {
                    Expr::Var(*bools.choose(&mut self.rng).unwrap())
                };
                let rhs = Expr::Var(*bools.choose(&mut self.rng).unwrap());
                let op = if self.rng.gen_bool(0.5) { BinOp::And } else { BinOp::Or };
                Expr::binary(op, lhs, rhs)
            }
            _ => self.comparison(),
        }
    }
}
