use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::bleu::check_inputs;
use crate::metrics::ngram::{DocumentFrequency, NGram, NGramStats, MAX_N};

pub const CIDER_SIGMA: f64 = 6.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CiderScores {
    /// Mean of the item scores.
    pub corpus: f64,
    pub items: Vec<f64>,
}

struct Weighted {
    vecs: Vec<HashMap<NGram, f64>>,
    norms: [f64; MAX_N],
    len: usize,
}

fn weigh(stats: &NGramStats, df: &DocumentFrequency, log_docs: f64) -> Weighted {
    let mut vecs = Vec::with_capacity(MAX_N);
    let mut norms = [0.0; MAX_N];
    for (k, counts) in stats.counts.iter().enumerate() {
        let mut v = HashMap::with_capacity(counts.len());
        for (g, &tf) in counts {
            let w = tf as f64 * (log_docs - df.get(g).max(1.0).ln());
            norms[k] += w * w;
            v.insert(g.clone(), w);
        }
        vecs.push(v);
    }
    Weighted {
        vecs,
        norms: norms.map(f64::sqrt),
        len: stats.len,
    }
}

/// Per-order clipped cosine, damped by the length Gaussian.
fn similarity(hyp: &Weighted, reference: &Weighted) -> [f64; MAX_N] {
    let delta = hyp.len as f64 - reference.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; MAX_N];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut dot = 0.0;
        for (g, &h) in &hyp.vecs[k] {
            if let Some(&r) = reference.vecs[k].get(g) {
                dot += h.min(r) * r;
            }
        }
        if hyp.norms[k] != 0.0 && reference.norms[k] != 0.0 {
            dot /= hyp.norms[k] * reference.norms[k];
        }
        *slot = dot * penalty;
    }
    out
}

/// CIDEr-D with document frequencies taken from the references being scored.
///
/// Needs at least two items: with one, every IDF weight is zero.
pub fn cider<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<CiderScores> {
    check_inputs(candidates, references)?;
    if candidates.len() < 2 {
        return Err(Error::InvalidArgument("CIDEr needs at least two items".into()));
    }
    let refs: Vec<Vec<NGramStats>> = references
        .iter()
        .map(|rs| rs.iter().map(|r| NGramStats::new(r)).collect())
        .collect();
    let df = DocumentFrequency::from_references(&refs);
    let log_docs = (df.documents as f64).ln();
    let items: Vec<f64> = candidates
        .iter()
        .zip(&refs)
        .map(|(c, rs)| {
            let hyp = weigh(&NGramStats::new(c), &df, log_docs);
            let mut acc = [0.0; MAX_N];
            for r in rs {
                let s = similarity(&hyp, &weigh(r, &df, log_docs));
                acc.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
            acc.iter().sum::<f64>() / MAX_N as f64 / rs.len() as f64 * 10.0
        })
        .collect();
    Ok(CiderScores {
        corpus: items.iter().sum::<f64>() / items.len() as f64,
        items,
    })
}
