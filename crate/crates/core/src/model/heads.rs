//! Pre-training objectives over in-batch pairs, and prompt inspection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{Tape, Tensor, Var};

/// Softmax temperature of the contrastive similarities.
pub const TEMPERATURE: f64 = 0.07;

/// One (scene features, caption ids) pair.
pub type Pair<'r> = (&'r Tensor, &'r [usize]);

/// Symmetric InfoNCE over `B x p` image and text vectors paired by row.
///
/// Rows are L2-normalized, similarities divided by `tau`, and the loss is
/// the mean of the image-to-text and text-to-image cross-entropies.
pub fn info_nce(tape: &mut Tape<'_>, image: Var, text: Var, tau: f64) -> Result<Var> {
    let b = tape.value(image).shape()[0];
    if b < 2 {
        return Err(Error::InvalidArgument("contrastive loss needs a batch of at least 2".into()));
    }
    let i = tape.normalize_rows(image)?;
    let t = tape.normalize_rows(text)?;
    let tt = tape.transpose(t)?;
    let sims = tape.matmul(i, tt)?;
    let sims = tape.scale(sims, 1.0 / tau)?;
    let targets: Vec<usize> = (0..b).collect();
    let all = vec![true; b];
    let i2t = tape.cross_entropy(sims, &targets, &all)?;
    let st = tape.transpose(sims)?;
    let t2i = tape.cross_entropy(st, &targets, &all)?;
    let sum = tape.add(i2t, t2i)?;
    tape.scale(sum, 0.5)
}

/// A uniformly drawn cyclic permutation (Sattolo), so `p[i] != i` for all i.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        p.swap(i, j);
    }
    p
}

impl Model {
    /// Image-text contrastive loss over a batch of matched pairs.
    pub fn forward_contrastive<'a>(&'a self, tape: &mut Tape<'a>, batch: &[Pair<'_>]) -> Result<Var> {
        if batch.len() < 2 {
            return Err(Error::InvalidArgument("contrastive loss needs a batch of at least 2".into()));
        }
        let mut imgs = Vec::with_capacity(batch.len());
        let mut txts = Vec::with_capacity(batch.len());
        for (features, caption) in batch {
            let mem = self.encode_image(tape, features)?;
            imgs.push(self.image_embedding(tape, mem)?);
            txts.push(self.text_embedding(tape, caption)?);
        }
        let img = tape.concat(&imgs, 0)?;
        let txt = tape.concat(&txts, 0)?;
        info_nce(tape, img, txt, TEMPERATURE)
    }

    /// Image-text matching loss: every pair plus one in-batch negative
    /// (its scene with a deranged caption), classified as matched or not.
    pub fn forward_match<'a>(&'a self, tape: &mut Tape<'a>, batch: &[Pair<'_>], seed: u64) -> Result<Var> {
        let memories = batch
            .iter()
            .map(|(f, _)| self.encode_image(tape, f))
            .collect::<Result<Vec<_>>>()?;
        self.match_with_memories(tape, &memories, batch, seed)
    }

    pub(crate) fn match_with_memories<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        memories: &[Var],
        batch: &[Pair<'_>],
        seed: u64,
    ) -> Result<Var> {
        let n = batch.len();
        if n < 2 {
            return Err(Error::InvalidArgument("matching loss needs a batch of at least 2".into()));
        }
        let neg = derangement(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut rows = Vec::with_capacity(2 * n);
        let mut targets = Vec::with_capacity(2 * n);
        for i in 0..n {
            rows.push(self.match_logits(tape, memories[i], batch[i].1)?);
            targets.push(1);
            rows.push(self.match_logits(tape, memories[i], batch[neg[i]].1)?);
            targets.push(0);
        }
        let logits = tape.concat(&rows, 0)?;
        tape.cross_entropy(logits, &targets, &vec![true; 2 * n])
    }
}

/// For each prompt row, the vocabulary id whose embedding has the largest
/// dot product with it; ties go to the lowest id.
pub fn nearest_vocab(prompt: &Tensor, embedding: &Tensor) -> Result<Vec<usize>> {
    let (ps, es) = (prompt.shape(), embedding.shape());
    if ps.len() != 2 || es.len() != 2 || ps[1] != es[1] {
        return Err(Error::shape("nearest_vocab", ps, es));
    }
    let (v, d) = (es[0], es[1]);
    let mut sims = vec![0.0; ps[0] * v];
    crate::numerics::kernels::gemm(ps[0], d, v, prompt.data(), false, embedding.data(), true, &mut sims, false);
    Ok(sims
        .chunks(v)
        .map(|row| {
            let mut best = 0;
            for (j, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}
