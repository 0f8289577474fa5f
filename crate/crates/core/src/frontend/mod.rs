//! Lexing, parsing and meta-grammar tagging for both dialects.

mod ast;
mod lexer;
mod parser;
mod tags;

pub use ast::{Ast, Node, NodeId, NodeKind, Production};
pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::{parse, ParseError};
pub use tags::{meta_tag, MetaTag};

use crate::corpus::LabeledProgram;
use crate::dialect::Dialect;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub fn parse_source(source: &str, dialect: Dialect) -> Result<Ast, FrontendError> {
    let tokens = tokenize(source, dialect)?;
    Ok(parse(&tokens, dialect)?)
}

/// Parses a stored program. Tokens are re-lexed one by one so token kinds
/// are recovered and the token count is preserved exactly.
pub fn parse_program(p: &LabeledProgram) -> Result<Ast, FrontendError> {
    let mut tokens = Vec::with_capacity(p.tokens.len());
    for (i, text) in p.tokens.iter().enumerate() {
        let mut lexed = tokenize(text, p.dialect)?;
        if lexed.len() != 1 {
            return Err(FrontendError::Parse(ParseError {
                position: i,
                expected: vec!["a single token".into()],
                found: Some(text.clone()),
            }));
        }
        let mut t = lexed.pop().unwrap();
        t.index = i;
        tokens.push(t);
    }
    Ok(parse(&tokens, p.dialect)?)
}
