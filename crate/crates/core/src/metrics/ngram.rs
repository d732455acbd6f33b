use std::collections::{HashMap, HashSet};

pub const MAX_N: usize = 4;

pub type NGram = Vec<String>;

/// Counts of every 1..=4-gram of one sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NGramStats {
    /// `counts[n - 1]` holds the n-grams.
    pub counts: [HashMap<NGram, usize>; MAX_N],
    pub len: usize,
}

impl NGramStats {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        let words: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let mut counts: [HashMap<NGram, usize>; MAX_N] = Default::default();
        for (k, map) in counts.iter_mut().enumerate() {
            for w in words.windows(k + 1) {
                *map.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        NGramStats {
            counts,
            len: words.len(),
        }
    }

    pub fn order(&self, n: usize) -> &HashMap<NGram, usize> {
        &self.counts[n - 1]
    }

    /// Number of n-grams of order `n`.
    pub fn total(&self, n: usize) -> usize {
        self.len.saturating_sub(n - 1)
    }

    pub fn count(&self, gram: &[String]) -> usize {
        match gram.len() {
            1..=MAX_N => self.counts[gram.len() - 1].get(gram).copied().unwrap_or(0),
            _ => 0,
        }
    }
}

/// For each n-gram, the number of evaluation items whose references
/// contain it at least once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocumentFrequency {
    pub df: HashMap<NGram, f64>,
    /// Number of items the frequencies were counted over.
    pub documents: usize,
}

impl DocumentFrequency {
    pub fn from_references(references: &[Vec<NGramStats>]) -> Self {
        let mut df: HashMap<NGram, f64> = HashMap::new();
        for refs in references {
            let seen: HashSet<&NGram> = refs.iter().flat_map(|r| r.counts.iter().flat_map(|m| m.keys())).collect();
            for g in seen {
                *df.entry(g.clone()).or_insert(0.0) += 1.0;
            }
        }
        DocumentFrequency {
            df,
            documents: references.len(),
        }
    }

    pub fn get(&self, gram: &[String]) -> f64 {
        self.df.get(gram).copied().unwrap_or(0.0)
    }
}
