//! Greedy and beam search over any incremental next-token scorer.

use crate::error::{Error, Result};
use crate::tokenizer::EOS;

/// Something that extends a decoding state by one token and returns the
/// logits for the following position.
pub trait StepModel {
    type State: Clone;

    fn advance(&self, state: &mut Self::State, token: usize) -> Result<Vec<f64>>;
}

/// One finished or truncated hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, EOS excluded.
    pub tokens: Vec<usize>,
    /// True when the hypothesis ended with EOS rather than at the length limit.
    pub terminated: bool,
    pub log_prob: f64,
    /// Log-probability of each generated id, EOS included when terminated.
    pub step_log_probs: Vec<f64>,
}

impl Hypothesis {
    /// Generated length with the EOS counted.
    pub fn len(&self) -> usize {
        self.step_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_log_probs.is_empty()
    }

    /// `log p / len^alpha`.
    pub fn score(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return self.log_prob;
        }
        self.log_prob / (self.len().max(1) as f64).powf(alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub best: Hypothesis,
    /// Remaining hypotheses, best first.
    pub runners_up: Vec<Hypothesis>,
}

impl DecodeResult {
    pub fn tokens(&self) -> &[usize] {
        &self.best.tokens
    }

    pub fn log_prob(&self) -> f64 {
        self.best.log_prob
    }

    pub fn terminated(&self) -> bool {
        self.best.terminated
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    crate::numerics::kernels::log_softmax_row(logits, &mut out);
    out
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Always extends with the most probable token.
pub fn greedy<M: StepModel>(model: &M, mut state: M::State, first_logits: Vec<f64>, max_len: usize) -> Result<DecodeResult> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max length must be at least 1".into()));
    }
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        terminated: false,
        log_prob: 0.0,
        step_log_probs: Vec::new(),
    };
    let mut logits = first_logits;
    while hyp.len() < max_len {
        let lp = log_softmax(&logits);
        let tok = argmax(&lp);
        hyp.log_prob += lp[tok];
        hyp.step_log_probs.push(lp[tok]);
        if tok == EOS {
            hyp.terminated = true;
            break;
        }
        hyp.tokens.push(tok);
        if hyp.len() < max_len {
            logits = model.advance(&mut state, tok)?;
        }
    }
    Ok(DecodeResult {
        best: hyp,
        runners_up: Vec::new(),
    })
}

struct Live<S> {
    state: S,
    logits: Vec<f64>,
    hyp: Hypothesis,
}

/// Beam search keeping the `beam` best extensions per step.
///
/// A hypothesis that emits EOS retires and gives up its slot, so the search
/// narrows as hypotheses finish; with one beam it is exactly greedy search.
/// Finished and length-truncated hypotheses are ranked by
/// `log p / len^alpha`.
pub fn beam_search<M: StepModel>(
    model: &M,
    state: M::State,
    first_logits: Vec<f64>,
    max_len: usize,
    beam: usize,
    alpha: f64,
) -> Result<DecodeResult> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidArgument("max length must be at least 1".into()));
    }
    let mut live = vec![Live {
        state,
        logits: first_logits,
        hyp: Hypothesis {
            tokens: Vec::new(),
            terminated: false,
            log_prob: 0.0,
            step_log_probs: Vec::new(),
        },
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        // (cumulative log-prob, beam index, token, step log-prob)
        let mut cands: Vec<(f64, usize, usize, f64)> = Vec::new();
        for (b, l) in live.iter().enumerate() {
            for (tok, &lp) in log_softmax(&l.logits).iter().enumerate() {
                cands.push((l.hyp.log_prob + lp, b, tok, lp));
            }
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        cands.truncate(beam);
        let mut next = Vec::with_capacity(cands.len());
        for (total, b, tok, lp) in cands {
            let parent = &live[b];
            let mut hyp = parent.hyp.clone();
            hyp.log_prob = total;
            hyp.step_log_probs.push(lp);
            if tok == EOS {
                hyp.terminated = true;
                done.push(hyp);
                continue;
            }
            hyp.tokens.push(tok);
            if hyp.len() >= max_len {
                done.push(hyp);
                continue;
            }
            let mut state = parent.state.clone();
            let logits = model.advance(&mut state, tok)?;
            next.push(Live { state, logits, hyp });
        }
        live = next;
    }
    done.sort_by(|a, b| b.score(alpha).total_cmp(&a.score(alpha)));
    let best = done.remove(0);
    Ok(DecodeResult { best, runners_up: done })
}
