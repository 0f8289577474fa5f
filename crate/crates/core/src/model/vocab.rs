use crate::LabeledProgram;
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

pub const UNK: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const MASK: usize = 3;
const SPECIALS: [&str; 4] = ["[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Token vocabulary: four special tokens followed by surface tokens in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Vocab {
        let rest: BTreeSet<String> = tokens.into_iter().filter(|t| !SPECIALS.contains(&t.as_str())).collect();
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(rest).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn build<'a>(programs: impl IntoIterator<Item = &'a LabeledProgram>) -> Vocab {
        Vocab::from_tokens(programs.into_iter().flat_map(|p| p.tokens.iter().cloned()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or `UNK` when unseen.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// First id that is not a special token.
    pub fn first_regular(&self) -> usize {
        SPECIALS.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Vocab> {
        let text = fs::read_to_string(path)?;
        Ok(Vocab::from_tokens(text.lines().filter(|l| !l.is_empty()).map(str::to_string)))
    }
}
