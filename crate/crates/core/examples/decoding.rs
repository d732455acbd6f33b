//! Greedy decoding against beam search on a hand-made next-token table.

use promptcap::inference::{beam_search, greedy, StepModel};
use promptcap::tokenizer::EOS;

/// Logits depend only on the previous token.
struct Bigram(Vec<Vec<f64>>);

impl StepModel for Bigram {
    type State = ();

    fn advance(&self, _: &mut (), token: usize) -> promptcap::Result<Vec<f64>> {
        Ok(self.0[token].clone())
    }
}

fn main() -> promptcap::Result<()> {
    let low = -5.0;
    // token 5 looks best first but leads nowhere; 6 leads to a confident EOS
    let mut table = vec![vec![low; 7]; 7];
    table[5] = vec![low, low, 0.0, low, low, 0.0, 0.0];
    table[6][EOS] = 4.0;
    let first = vec![low, low, low, low, low, 1.0, 0.8];
    let model = Bigram(table);

    let g = greedy(&model, (), first.clone(), 5)?;
    println!("greedy: {:?} log p = {:.3}", g.tokens(), g.log_prob());
    for beam in [1, 2, 3] {
        let b = beam_search(&model, (), first.clone(), 5, beam, 0.0)?;
        println!("beam {beam}: {:?} log p = {:.3}", b.tokens(), b.log_prob());
    }
    Ok(())
}
