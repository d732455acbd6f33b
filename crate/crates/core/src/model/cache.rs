//! Incremental decoding with cached keys and values.
//!
//! Feeding stream rows one at a time through [`Model::step`] yields the same
//! logits as a full causal pass, at a cost linear in the stream length.

use crate::error::{Error, Result};
use crate::model::network::{AttnIds, FfIds, LnIds};
use crate::model::{Model, Prompt};
use crate::numerics::kernels::{affine_row, gelu, gemm, layer_norm_row, softmax_row};
use crate::numerics::{Tape, Tensor};
use crate::tokenizer::BOS;

/// Encoded scene plus per-layer cross-attention keys and values.
#[derive(Clone, Debug)]
pub struct VisualContext {
    rows: usize,
    cross: Vec<(Vec<f64>, Vec<f64>)>,
}

impl VisualContext {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Self-attention keys and values of every position fed so far.
#[derive(Clone, Debug)]
pub struct DecoderState {
    len: usize,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl DecoderState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `out = LN(x) * g + b`.
fn ln_affine(model: &Model, ids: LnIds, x: &[f64], out: &mut [f64]) {
    layer_norm_row(x, out);
    let (g, b) = (model.params().get(ids.g).data(), model.params().get(ids.b).data());
    for ((o, g), b) in out.iter_mut().zip(g).zip(b) {
        *o = *o * g + b;
    }
}

fn feed_forward(model: &Model, ids: FfIds, x: &[f64], out: &mut [f64]) {
    let p = model.params();
    let mut h = vec![0.0; model.config().d_ff];
    affine_row(x, p.get(ids.w1).data(), Some(p.get(ids.b1).data()), &mut h);
    h.iter_mut().for_each(|v| *v = gelu(*v));
    affine_row(&h, p.get(ids.w2).data(), Some(p.get(ids.b2).data()), out);
}

/// One query row against `n` cached key/value rows; returns the `wo` output.
fn attend(model: &Model, ids: AttnIds, q: &[f64], keys: &[f64], values: &[f64], n: usize, out: &mut [f64]) {
    let c = model.config();
    let (d, h, dh) = (c.d_model, c.n_heads, c.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let mut mixed = vec![0.0; d];
    let mut scores = vec![0.0; n];
    for head in 0..h {
        let off = head * dh;
        for (j, s) in scores.iter_mut().enumerate() {
            let k = &keys[j * d + off..j * d + off + dh];
            *s = q[off..off + dh].iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        softmax_row(&mut scores);
        for (j, &w) in scores.iter().enumerate() {
            let v = &values[j * d + off..j * d + off + dh];
            for (m, x) in mixed[off..off + dh].iter_mut().zip(v) {
                *m += w * x;
            }
        }
    }
    affine_row(&mixed, model.params().get(ids.wo).data(), None, out);
}

impl Model {
    /// Encodes a scene once for repeated decoding steps.
    pub fn visual_context(&self, features: &Tensor) -> Result<VisualContext> {
        let mut tape = Tape::no_grad();
        let mem = self.encode_image(&mut tape, features)?;
        let mem = tape.value(mem);
        let (m, d) = (mem.shape()[0], self.config().d_model);
        let cross = self
            .ids
            .decoder
            .iter()
            .map(|layer| {
                let mut k = vec![0.0; m * d];
                let mut v = vec![0.0; m * d];
                let p = self.params();
                gemm(m, d, d, mem.data(), false, p.get(layer.cross_attn.wk).data(), false, &mut k, false);
                gemm(m, d, d, mem.data(), false, p.get(layer.cross_attn.wv).data(), false, &mut v, false);
                (k, v)
            })
            .collect();
        Ok(VisualContext { rows: m, cross })
    }

    pub fn empty_state(&self) -> DecoderState {
        let n = self.config().n_layers;
        DecoderState {
            len: 0,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
        }
    }

    /// Input rows (before positions) for BOS and the prompt.
    pub fn prefix_rows(&self, prompt: &Prompt) -> Result<Vec<Vec<f64>>> {
        let table = self.params().get(self.ids.tokens);
        let mut rows = vec![table.row(BOS).to_vec()];
        match prompt {
            Prompt::Empty => {}
            Prompt::Manual(ids) => {
                for &id in ids {
                    if id >= table.shape()[0] {
                        return Err(Error::TokenOutOfRange {
                            id,
                            size: table.shape()[0],
                        });
                    }
                    rows.push(table.row(id).to_vec());
                }
            }
            Prompt::Learned(i) => {
                let p = self.params().get(self.prompt_id(*i)?);
                rows.extend((0..p.rows()).map(|r| p.row(r).to_vec()));
            }
        }
        Ok(rows)
    }

    /// Embedding row of a token, as fed to [`Model::step`].
    pub fn token_row(&self, id: usize) -> Result<&[f64]> {
        let table = self.params().get(self.ids.tokens);
        if id >= table.shape()[0] {
            return Err(Error::TokenOutOfRange {
                id,
                size: table.shape()[0],
            });
        }
        Ok(table.row(id))
    }

    /// Feeds one input row and returns the next-token logits at its position.
    pub fn step(&self, ctx: &VisualContext, state: &mut DecoderState, input: &[f64]) -> Result<Vec<f64>> {
        let c = *self.config();
        let d = c.d_model;
        if state.len >= c.max_seq_len {
            return Err(Error::InvalidArgument(format!(
                "text stream exceeds the maximum of {} positions",
                c.max_seq_len
            )));
        }
        let p = self.params();
        let pos = p.get(self.ids.positions).row(state.len);
        let mut x: Vec<f64> = input.iter().zip(pos).map(|(a, b)| a + b).collect();
        let mut h = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut kv = vec![0.0; d];
        let mut out = vec![0.0; d];
        let n = state.len + 1;
        for (l, layer) in self.ids.decoder.iter().enumerate() {
            ln_affine(self, layer.ln1, &x, &mut h);
            affine_row(&h, p.get(layer.self_attn.wq).data(), None, &mut q);
            affine_row(&h, p.get(layer.self_attn.wk).data(), None, &mut kv);
            state.keys[l].extend_from_slice(&kv);
            affine_row(&h, p.get(layer.self_attn.wv).data(), None, &mut kv);
            state.values[l].extend_from_slice(&kv);
            attend(self, layer.self_attn, &q, &state.keys[l], &state.values[l], n, &mut out);
            x.iter_mut().zip(&out).for_each(|(a, b)| *a += b);

            ln_affine(self, layer.ln2, &x, &mut h);
            affine_row(&h, p.get(layer.cross_attn.wq).data(), None, &mut q);
            let (ck, cv) = &ctx.cross[l];
            attend(self, layer.cross_attn, &q, ck, cv, ctx.rows, &mut out);
            x.iter_mut().zip(&out).for_each(|(a, b)| *a += b);

            ln_affine(self, layer.ln3, &x, &mut h);
            feed_forward(self, layer.ff, &h, &mut out);
            x.iter_mut().zip(&out).for_each(|(a, b)| *a += b);
        }
        state.len = n;
        ln_affine(self, self.ids.decoder_ln, &x, &mut h);
        let table = p.get(self.ids.tokens);
        let v = table.shape()[0];
        let mut logits = vec![0.0; v];
        gemm(1, d, v, &h, false, table.data(), true, &mut logits, false);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite { op: "step" });
        }
        Ok(logits)
    }

    /// Runs BOS and the prompt through a fresh state; returns the state and
    /// the logits for the first caption token.
    pub fn start(&self, ctx: &VisualContext, prompt: &Prompt) -> Result<(DecoderState, Vec<f64>)> {
        let mut state = self.empty_state();
        let mut logits = Vec::new();
        for row in self.prefix_rows(prompt)? {
            logits = self.step(ctx, &mut state, &row)?;
        }
        Ok((state, logits))
    }
}
