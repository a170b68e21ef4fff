//! Token/id mapping with four reserved symbols.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::DialoguePair;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

pub const DEFAULT_CAPACITY: usize = 25_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    capacity: usize,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved symbols.
    pub fn specials_only(capacity: usize) -> Self {
        let id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
            capacity,
        }
    }

    /// Rank tokens by descending frequency over both sides of every pair
    /// (ties lexicographic) and admit the top `capacity - 4`.
    pub fn build(pairs: &[DialoguePair], capacity: usize) -> Result<Self> {
        if capacity <= SPECIALS.len() {
            return Err(Error::InvalidInput(format!(
                "vocabulary capacity must exceed {}, got {capacity}",
                SPECIALS.len()
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for pair in pairs {
            for tok in pair.message.iter().chain(&pair.response) {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(capacity - SPECIALS.len());

        let mut vocab = Vocabulary::specials_only(capacity);
        for (tok, _) in ranked {
            vocab.push(tok.to_string());
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) {
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::OutOfRange {
                id,
                size: self.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        ids.iter().map(|&id| self.token(id).map(str::to_string)).collect()
    }

    /// Decode a generated response: drops a trailing EOS.
    pub fn render(&self, ids: &[TokenId]) -> Result<String> {
        let body = match ids.last() {
            Some(&EOS) => &ids[..ids.len() - 1],
            _ => ids,
        };
        Ok(self.decode(body)?.join(" "))
    }

    /// One token per line; the zero-based line index is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, capacity: usize) -> Result<Self> {
        let mut vocab = Vocabulary::specials_only(capacity);
        for (i, line) in text.lines().enumerate() {
            if i < SPECIALS.len() {
                if line != SPECIALS[i] {
                    return Err(Error::Format(format!(
                        "vocabulary line {} should be {:?}, found {line:?}",
                        i + 1,
                        SPECIALS[i]
                    )));
                }
                continue;
            }
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("vocabulary line {} is not a token", i + 1)));
            }
            if vocab.token_to_id.contains_key(line) {
                return Err(Error::Format(format!("vocabulary line {} duplicates {line:?}", i + 1)));
            }
            vocab.push(line.to_string());
        }
        if vocab.len() < SPECIALS.len() {
            return Err(Error::Format("vocabulary is missing reserved symbols".into()));
        }
        vocab.capacity = vocab.capacity.max(vocab.len());
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_text(&text, DEFAULT_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(m: &str, r: &str) -> DialoguePair {
        DialoguePair::from_text(m, r).unwrap()
    }

    #[test]
    fn frequency_ranking() {
        let v = Vocabulary::build(&[pair("a a b", "a")], 6).unwrap();
        assert_eq!(v.tokens()[4..], ["a".to_string(), "b".to_string()]);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
    }

    #[test]
    fn empty_corpus_has_only_specials() {
        let v = Vocabulary::build(&[], 100).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.tokens(), SPECIALS);
    }

    #[test]
    fn capacity_truncates_to_most_frequent() {
        // c=3, b=2, a=1
        let v = Vocabulary::build(&[pair("c b a", "c b c")], 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4).unwrap(), "c");
        assert_eq!(v.id("b"), UNK);
        assert!(Vocabulary::build(&[], 4).is_err());
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocabulary::build(&[pair("zeta beta", "alpha")], 10).unwrap();
        assert_eq!(v.tokens()[4..], ["alpha", "beta", "zeta"]);
    }

    #[test]
    fn encode_decode() {
        let v = Vocabulary::build(&[pair("a a b", "a")], 6).unwrap();
        assert_eq!(v.encode(&["zzz"]), vec![UNK]);
        // a=4, b=5
        assert_eq!(v.encode(&["b", "zzz", "a", "b"]), vec![5, UNK, 4, 5]);
        assert_eq!(v.decode(&[5, UNK, 4]).unwrap(), vec!["b", "<unk>", "a"]);
        assert!(matches!(v.decode(&[6]), Err(Error::OutOfRange { id: 6, size: 6 })));
        assert_eq!(v.render(&[4, 5, EOS]).unwrap(), "a b");
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build(&[pair("x y y", "z")], 50).unwrap();
        let back = Vocabulary::from_text(&v.to_text(), 50).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_text("a\nb\n", 10).is_err());
    }

    proptest! {
        #[test]
        fn in_vocab_round_trip(words in prop::collection::vec("[a-e]{1,3}", 1..20)) {
            let text = words.join(" ");
            let v = Vocabulary::build(&[pair(&text, "x")], 1000).unwrap();
            let ids = v.encode(&words);
            prop_assert_eq!(v.decode(&ids).unwrap(), words);
            prop_assert_eq!(v.encode(&v.decode(&ids).unwrap()), ids);
        }

        #[test]
        fn build_is_deterministic(words in prop::collection::vec("[a-f]{1,2}", 1..30), cap in 5usize..12) {
            let p = [pair(&words.join(" "), "q")];
            prop_assert_eq!(Vocabulary::build(&p, cap).unwrap(), Vocabulary::build(&p, cap).unwrap());
        }
    }
}
