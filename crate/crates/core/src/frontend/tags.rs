//! Unified meta-grammar tags.
//!
//! Five tags unify operators and keywords whose spelling differs between
//! dialects (`==`, `!=`, `def`, `amp-and`, `or`). The remaining tags are a
//! reconstruction of the structural markup: they describe a token's role
//! (name, literal, block delimiter, ...) rather than its spelling.

use super::ast::Ast;
use super::lexer::{Token, TokenKind};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaTag {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "def")]
    Def,
    #[serde(rename = "amp-and")]
    AmpAnd,
    #[serde(rename = "or")]
    Or,
    #[serde(rename = "name")]
    Name,
    #[serde(rename = "num-lit")]
    NumLit,
    #[serde(rename = "str-lit")]
    StrLit,
    #[serde(rename = "assign")]
    Assign,
    #[serde(rename = "open")]
    Open,
    #[serde(rename = "close")]
    Close,
    #[serde(rename = "stmt-end")]
    StmtEnd,
    #[serde(rename = "cond")]
    Cond,
    #[serde(rename = "loop")]
    Loop,
    #[serde(rename = "call")]
    Call,
    #[serde(rename = "list-open")]
    ListOpen,
    #[serde(rename = "list-close")]
    ListClose,
    #[serde(rename = "arith")]
    Arith,
    #[serde(rename = "sep")]
    Sep,
}

impl MetaTag {
    pub const ALL: [MetaTag; 19] = [
        MetaTag::Eq,
        MetaTag::Ne,
        MetaTag::Def,
        MetaTag::AmpAnd,
        MetaTag::Or,
        MetaTag::Name,
        MetaTag::NumLit,
        MetaTag::StrLit,
        MetaTag::Assign,
        MetaTag::Open,
        MetaTag::Close,
        MetaTag::StmtEnd,
        MetaTag::Cond,
        MetaTag::Loop,
        MetaTag::Call,
        MetaTag::ListOpen,
        MetaTag::ListClose,
        MetaTag::Arith,
        MetaTag::Sep,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetaTag::Eq => "==",
            MetaTag::Ne => "!=",
            MetaTag::Def => "def",
            MetaTag::AmpAnd => "amp-and",
            MetaTag::Or => "or",
            MetaTag::Name => "name",
            MetaTag::NumLit => "num-lit",
            MetaTag::StrLit => "str-lit",
            MetaTag::Assign => "assign",
            MetaTag::Open => "open",
            MetaTag::Close => "close",
            MetaTag::StmtEnd => "stmt-end",
            MetaTag::Cond => "cond",
            MetaTag::Loop => "loop",
            MetaTag::Call => "call",
            MetaTag::ListOpen => "list-open",
            MetaTag::ListClose => "list-close",
            MetaTag::Arith => "arith",
            MetaTag::Sep => "sep",
        }
    }

    /// Tag of a single token. Identifiers are always `name`, whatever their
    /// spelling, so a beta variable called `end` is not mistaken for a block
    /// delimiter.
    pub fn of_token(token: &Token) -> MetaTag {
        match token.kind {
            TokenKind::Identifier => return MetaTag::Name,
            TokenKind::NumberLiteral => return MetaTag::NumLit,
            TokenKind::StringLiteral => return MetaTag::StrLit,
            TokenKind::Keyword | TokenKind::Operator | TokenKind::Punctuation => {}
        }
        match token.text.as_str() {
            "==" | "===" => MetaTag::Eq,
            "!=" | "!==" => MetaTag::Ne,
            "def" | "function" => MetaTag::Def,
            "&" | "&&" => MetaTag::AmpAnd,
            "|" | "||" => MetaTag::Or,
            "let" | "var" | "=" => MetaTag::Assign,
            "(" | ":" | "{" => MetaTag::Open,
            ")" | "end" | "}" => MetaTag::Close,
            ";" => MetaTag::StmtEnd,
            "if" | "else" => MetaTag::Cond,
            "while" => MetaTag::Loop,
            "print" | "log" => MetaTag::Call,
            "[" => MetaTag::ListOpen,
            "]" => MetaTag::ListClose,
            "+" => MetaTag::Arith,
            "," => MetaTag::Sep,
            _ => MetaTag::Name,
        }
    }
}

impl fmt::Display for MetaTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tag per token of `ast`, in token order.
pub fn meta_tag(ast: &Ast) -> Vec<MetaTag> {
    ast.tokens().iter().map(MetaTag::of_token).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::Dialect;
    use crate::frontend::tokenize;

    fn tag(src: &str, d: Dialect) -> MetaTag {
        MetaTag::of_token(&tokenize(src, d).unwrap()[0])
    }

    #[test]
    fn unified_rows() {
        assert_eq!(tag("===", Dialect::Beta), MetaTag::Eq);
        assert_eq!(tag("==", Dialect::Alpha), MetaTag::Eq);
        assert_eq!(tag("!==", Dialect::Beta), tag("!=", Dialect::Alpha));
        assert_eq!(tag("def", Dialect::Alpha), MetaTag::Def);
        assert_eq!(tag("function", Dialect::Beta), MetaTag::Def);
        assert_eq!(tag("&&", Dialect::Beta), tag("&", Dialect::Alpha));
        assert_eq!(tag("||", Dialect::Beta), MetaTag::Or);
    }

    #[test]
    fn identifiers_are_names() {
        assert_eq!(tag("foo", Dialect::Alpha), MetaTag::Name);
        assert_eq!(tag("foo", Dialect::Beta), MetaTag::Name);
        assert_eq!(tag("end", Dialect::Beta), MetaTag::Name);
        assert_eq!(tag("end", Dialect::Alpha), MetaTag::Close);
    }

    #[test]
    fn serialized_names_match_display() {
        for t in MetaTag::ALL {
            assert_eq!(serde_json::to_value(t).unwrap(), serde_json::Value::String(t.to_string()));
            assert_eq!(MetaTag::ALL[t.index()], t);
        }
    }
}
