//! Surface dialects and their lexicons.
//!
//! `alpha` is Python-flavoured and `beta` is TypeScript-flavoured. Both
//! dialects render the same abstract construct with the same number of
//! tokens, so token positions line up one-to-one across renderings.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Alpha,
    Beta,
}

/// Constructs whose spelling depends on the dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Function,
    Declare,
    Print,
    Equal,
    NotEqual,
    And,
    Or,
    BlockOpen,
    BlockClose,
}

/// Spellings shared by both dialects.
pub const IF: &str = "if";
pub const ELSE: &str = "else";
pub const WHILE: &str = "while";
pub const ASSIGN: &str = "=";
pub const PLUS: &str = "+";
pub const LPAREN: &str = "(";
pub const RPAREN: &str = ")";
pub const LBRACKET: &str = "[";
pub const RBRACKET: &str = "]";
pub const COMMA: &str = ",";
pub const SEMI: &str = ";";

impl Dialect {
    pub const ALL: [Dialect; 2] = [Dialect::Alpha, Dialect::Beta];

    pub fn spell(self, s: Surface) -> &'static str {
        use Surface::*;
        match (self, s) {
            (Dialect::Alpha, Function) => "def",
            (Dialect::Beta, Function) => "function",
            (Dialect::Alpha, Declare) => "let",
            (Dialect::Beta, Declare) => "var",
            (Dialect::Alpha, Print) => "print",
            (Dialect::Beta, Print) => "log",
            (Dialect::Alpha, Equal) => "==",
            (Dialect::Beta, Equal) => "===",
            (Dialect::Alpha, NotEqual) => "!=",
            (Dialect::Beta, NotEqual) => "!==",
            (Dialect::Alpha, And) => "&",
            (Dialect::Beta, And) => "&&",
            (Dialect::Alpha, Or) => "|",
            (Dialect::Beta, Or) => "||",
            (Dialect::Alpha, BlockOpen) => ":",
            (Dialect::Beta, BlockOpen) => "{",
            (Dialect::Alpha, BlockClose) => "end",
            (Dialect::Beta, BlockClose) => "}",
        }
    }

    pub fn quote(self) -> char {
        match self {
            Dialect::Alpha => '\'',
            Dialect::Beta => '"',
        }
    }

    /// Reserved words. Everything else matching the identifier pattern is an
    /// identifier.
    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            Dialect::Alpha => &["def", "let", "print", "if", "else", "while", "end"],
            Dialect::Beta => &["function", "var", "log", "if", "else", "while"],
        }
    }

    /// Operator spellings, longest first so a linear scan is maximal munch.
    pub fn operators(self) -> &'static [&'static str] {
        match self {
            Dialect::Alpha => &["==", "!=", "=", "&", "|", "+"],
            Dialect::Beta => &["===", "!==", "&&", "||", "=", "+"],
        }
    }

    pub fn punctuation(self) -> &'static [char] {
        match self {
            Dialect::Alpha => &['(', ')', '[', ']', ',', ';', ':'],
            Dialect::Beta => &['(', ')', '[', ']', ',', ';', '{', '}'],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dialect::Alpha => "alpha",
            Dialect::Beta => "beta",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(Dialect::Alpha),
            "beta" => Ok(Dialect::Beta),
            other => Err(format!("unknown dialect `{other}` (expected alpha or beta)")),
        }
    }
}
