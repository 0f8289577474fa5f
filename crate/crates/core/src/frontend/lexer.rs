use crate::dialect::Dialect;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    NumberLiteral,
    StringLiteral,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unexpected character {ch:?} at byte offset {offset}")]
    UnexpectedChar { offset: usize, ch: char },
    #[error("unterminated string literal starting at byte offset {offset}")]
    UnterminatedString { offset: usize },
}

impl LexError {
    pub fn offset(&self) -> usize {
        match self {
            LexError::UnexpectedChar { offset, .. } | LexError::UnterminatedString { offset } => *offset,
        }
    }
}

/// Maximal-munch lexer. Whitespace separates tokens and is otherwise ignored.
pub fn tokenize(source: &str, dialect: Dialect) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let push = |text: &str, kind: TokenKind, tokens: &mut Vec<Token>| {
        let index = tokens.len();
        tokens.push(Token { text: text.to_string(), kind, index });
    };
    while i < bytes.len() {
        let ch = source[i..].chars().next().unwrap();
        if ch.is_whitespace() {
            i += ch.len_utf8();
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let end = scan(bytes, i, |b| b.is_ascii_alphanumeric() || b == b'_');
            let word = &source[i..end];
            let kind = if dialect.keywords().contains(&word) { TokenKind::Keyword } else { TokenKind::Identifier };
            push(word, kind, &mut tokens);
            i = end;
            continue;
        }
        if ch.is_ascii_digit() {
            let end = scan(bytes, i, |b| b.is_ascii_digit());
            push(&source[i..end], TokenKind::NumberLiteral, &mut tokens);
            i = end;
            continue;
        }
        if ch == dialect.quote() {
            let close = source[i + 1..]
                .find(ch)
                .ok_or(LexError::UnterminatedString { offset: i })?;
            let end = i + 1 + close + 1;
            push(&source[i..end], TokenKind::StringLiteral, &mut tokens);
            i = end;
            continue;
        }
        if let Some(op) = dialect.operators().iter().find(|op| source[i..].starts_with(**op)) {
            push(op, TokenKind::Operator, &mut tokens);
            i += op.len();
            continue;
        }
        if dialect.punctuation().contains(&ch) {
            push(&source[i..i + 1], TokenKind::Punctuation, &mut tokens);
            i += 1;
            continue;
        }
        return Err(LexError::UnexpectedChar { offset: i, ch });
    }
    Ok(tokens)
}

fn scan(bytes: &[u8], start: usize, pred: impl Fn(u8) -> bool) -> usize {
    let mut end = start;
    while end < bytes.len() && pred(bytes[end]) {
        end += 1;
    }
    end
}
