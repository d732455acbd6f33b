use crate::error::{Error, Result};
use crate::metrics::ngram::{NGramStats, MAX_N};

/// Pooled clipped n-gram matches and totals over a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuCounts {
    pub matches: [usize; MAX_N],
    pub totals: [usize; MAX_N],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuCounts {
    pub fn add<S: AsRef<str>>(&mut self, candidate: &[S], references: &[Vec<S>]) {
        let cand = NGramStats::new(candidate);
        let refs: Vec<NGramStats> = references.iter().map(|r| NGramStats::new(r)).collect();
        for n in 1..=MAX_N {
            for (gram, &c) in cand.order(n) {
                let max_ref = refs.iter().map(|r| r.count(gram)).max().unwrap_or(0);
                self.matches[n - 1] += c.min(max_ref);
            }
            self.totals[n - 1] += cand.total(n);
        }
        self.candidate_len += cand.len;
        self.reference_len += closest_ref_len(cand.len, refs.iter().map(|r| r.len));
    }

    /// Geometric mean of the four precisions times the brevity penalty.
    pub fn score(&self) -> f64 {
        if self.matches.contains(&0) {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_N)
            .map(|i| (self.matches[i] as f64 / self.totals[i] as f64).ln())
            .sum::<f64>()
            / MAX_N as f64;
        brevity_penalty(self.candidate_len, self.reference_len) * log_p.exp()
    }
}

/// Reference length closest to `c`; the shorter one wins a tie.
fn closest_ref_len(c: usize, lens: impl Iterator<Item = usize>) -> usize {
    lens.min_by_key(|&r| (r.abs_diff(c), r)).unwrap_or(0)
}

/// `exp(min(0, 1 - r/c))`.
pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        return 0.0;
    }
    (1.0 - r as f64 / c as f64).min(0.0).exp()
}

pub(crate) fn check_inputs<S>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to score".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if let Some(i) = references.iter().position(|r| r.is_empty()) {
        return Err(Error::InvalidArgument(format!("item {i} has no references")));
    }
    Ok(())
}

/// Corpus-level BLEU-4 without smoothing.
pub fn bleu4<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<f64> {
    check_inputs(candidates, references)?;
    let mut counts = BleuCounts::default();
    for (c, r) in candidates.iter().zip(references) {
        counts.add(c, r);
    }
    Ok(counts.score())
}
