use std::collections::HashSet;

use crate::error::{Error, Result};

pub const POSITIVE_WORDS: [&str; 10] = [
    "happy", "nice", "awesome", "tasty", "great", "pretty", "beautiful", "cute", "good", "delicious",
];

pub const NEGATIVE_WORDS: [&str; 10] = [
    "stupid", "bad", "lonely", "disgusting", "silly", "dead", "ugly", "crazy", "terrible", "dirty",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmotionLexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

/// Which lexicon a caption belongs to, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sentiment {
    Positive,
    Negative,
    /// Contains words from both lists.
    Mixed,
    Neutral,
}

impl Default for EmotionLexicon {
    fn default() -> Self {
        Self::new(POSITIVE_WORDS, NEGATIVE_WORDS).expect("built-in lexicons are disjoint")
    }
}

impl EmotionLexicon {
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let positive: HashSet<String> = positive.into_iter().map(Into::into).collect();
        let negative: HashSet<String> = negative.into_iter().map(Into::into).collect();
        if let Some(w) = positive.intersection(&negative).next() {
            return Err(Error::InvalidArgument(format!("`{w}` is in both lexicons")));
        }
        Ok(EmotionLexicon { positive, negative })
    }

    pub fn is_positive(&self, word: &str) -> bool {
        self.positive.contains(word)
    }

    pub fn is_negative(&self, word: &str) -> bool {
        self.negative.contains(word)
    }

    pub fn count<S: AsRef<str>>(&self, tokens: &[S]) -> (usize, usize) {
        tokens.iter().fold((0, 0), |(p, n), t| {
            let t = t.as_ref();
            (p + self.is_positive(t) as usize, n + self.is_negative(t) as usize)
        })
    }

    pub fn classify<S: AsRef<str>>(&self, tokens: &[S]) -> Sentiment {
        match self.count(tokens) {
            (0, 0) => Sentiment::Neutral,
            (_, 0) => Sentiment::Positive,
            (0, _) => Sentiment::Negative,
            _ => Sentiment::Mixed,
        }
    }
}

/// Splits items into the positive and negative subsets; neutral and mixed
/// items land in neither.
pub fn filter_emotional<T, F>(items: Vec<T>, lexicon: &EmotionLexicon, tokens_of: F) -> (Vec<T>, Vec<T>)
where
    F: Fn(&T) -> &[String],
{
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for item in items {
        match lexicon.classify(tokens_of(&item)) {
            Sentiment::Positive => pos.push(item),
            Sentiment::Negative => neg.push(item),
            Sentiment::Mixed | Sentiment::Neutral => {}
        }
    }
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize;

    #[test]
    fn lexicons_must_be_disjoint() {
        assert!(EmotionLexicon::new(["good"], ["good"]).is_err());
        let _ = EmotionLexicon::default();
    }

    #[test]
    fn splits_by_sentiment() {
        let lex = EmotionLexicon::default();
        let items: Vec<Vec<String>> = ["a happy dog", "a red cube", "a happy ugly dog", "a terrible cat"]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let (pos, neg) = filter_emotional(items, &lex, |t| t.as_slice());
        assert_eq!(pos, vec![tokenize("a happy dog")]);
        assert_eq!(neg, vec![tokenize("a terrible cat")]);
    }
}
