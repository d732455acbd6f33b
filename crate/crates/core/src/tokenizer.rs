//! Closed word-level vocabulary with fixed special-token ids.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const CLS: usize = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]", "[CLS]"];

const PUNCTUATION: &[char] = &['.', ',', '"', '!', '?', ';', ':', '\''];

/// Lowercases, detaches punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars().flat_map(char::to_lowercase) {
            if PUNCTUATION.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size - 5` most frequent corpus tokens; frequency ties
    /// break lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Self> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        for special in SPECIAL_TOKENS {
            counts.remove(special);
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIAL_TOKENS.len());
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.encode_tokens(&tokenize(text))
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)).collect()
    }

    /// Space-joined text; special tokens other than UNK are skipped.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        Ok(self.decode_tokens(ids)?.join(" "))
    }

    pub fn decode_tokens(&self, ids: &[usize]) -> Result<Vec<&str>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange { id, size: self.len() })?;
            if id < SPECIAL_TOKENS.len() && id != UNK {
                continue;
            }
            out.push(tok);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_from_small_corpus() {
        let v = Vocabulary::build(&["a red cube", "a red ball"], 100).unwrap();
        assert_eq!(v.len(), 9);
        for t in ["a", "red", "cube", "ball"] {
            assert!(v.contains(t));
        }
        // most frequent first, ties lexicographic
        assert_eq!(&v.tokens()[5..], &["a", "red", "ball", "cube"]);
        assert_eq!(v.id("[BOS]"), Some(BOS));
        assert_eq!(v.id("[CLS]"), Some(CLS));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(Vocabulary::build(&[""], 10), Err(Error::EmptyCorpus)));
        let none: [&str; 0] = [];
        assert!(Vocabulary::build(&none, 10).is_err());
    }

    #[test]
    fn deterministic_build() {
        let corpus = ["the cat sat", "a dog ran", "the dog sat"];
        assert_eq!(
            Vocabulary::build(&corpus, 50).unwrap(),
            Vocabulary::build(&corpus, 50).unwrap()
        );
    }

    #[test]
    fn max_size_truncates() {
        let v = Vocabulary::build(&["a a a b b c"], 7).unwrap();
        assert_eq!(v.len(), 7);
        assert!(!v.contains("c"));
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = Vocabulary::build(&["a red cube", "a red ball"], 100).unwrap();
        let ids = v.encode("a red cube");
        assert_eq!(ids, vec![v.id("a").unwrap(), v.id("red").unwrap(), v.id("cube").unwrap()]);
        assert_eq!(v.decode(&ids).unwrap(), "a red cube");
        let with_unk = v.encode("a zzz cube");
        assert_eq!(with_unk[1], UNK);
        assert_eq!(v.decode(&with_unk).unwrap(), "a [UNK] cube");
        assert_eq!(v.decode(&[BOS, ids[0], EOS]).unwrap(), "a");
        assert!(matches!(v.decode(&[99]), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn punctuation_is_detached() {
        assert_eq!(
            tokenize("A sign that says \"Open\"."),
            vec!["a", "sign", "that", "says", "\"", "open", "\"", "."]
        );
    }
}
