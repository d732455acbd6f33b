//! Parameter layout and tape forward passes.
//!
//! Parameter names:
//!
//! ```text
//! embed.tokens                      V x d, also the output projection
//! embed.positions                   L x d
//! encoder.proj.{w,b}
//! encoder.{i}.{ln1,ln2}.{g,b}
//! encoder.{i}.attn.{wq,wk,wv,wo}
//! encoder.{i}.ff.{w1,b1,w2,b2}
//! encoder.ln_f.{g,b}
//! decoder.{i}.{ln1,ln2,ln3}.{g,b}
//! decoder.{i}.self_attn.{wq,wk,wv,wo}
//! decoder.{i}.cross_attn.{wq,wk,wv,wo}
//! decoder.{i}.ff.{w1,b1,w2,b2}
//! decoder.ln_f.{g,b}
//! heads.image_proj.w, heads.text_proj.w, heads.match.{w,b}
//! prompts.{style}                   N x d
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Style;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Prompt};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::tokenizer::{BOS, CLS, EOS, PAD};

/// Additive mask value; `exp` of it underflows to exactly zero.
pub(crate) const MASKED: f64 = -1e9;

const EMBED_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LnIds {
    pub g: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FfIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderLayer {
    pub ln1: LnIds,
    pub attn: AttnIds,
    pub ln2: LnIds,
    pub ff: FfIds,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderLayer {
    pub ln1: LnIds,
    pub self_attn: AttnIds,
    pub ln2: LnIds,
    pub cross_attn: AttnIds,
    pub ln3: LnIds,
    pub ff: FfIds,
}

#[derive(Clone, Debug)]
pub(crate) struct Ids {
    pub tokens: ParamId,
    pub positions: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_ln: LnIds,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_ln: LnIds,
    pub image_proj: ParamId,
    pub text_proj: ParamId,
    pub match_w: ParamId,
    pub match_b: ParamId,
    pub prompts: Vec<ParamId>,
}

/// Name of the prompt-bank entry for bank index `i`.
pub fn prompt_param_name(i: usize) -> String {
    match Style::from_index(i) {
        Some(s) => format!("prompts.{}", s.tag()),
        None => format!("prompts.{i}"),
    }
}

pub fn is_prompt_param(name: &str) -> bool {
    name.starts_with("prompts.")
}

/// Expected `(name, shape)` of every parameter, in storage order.
fn layout(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f) = (c.d_model, c.d_ff);
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("embed.tokens".into(), vec![c.vocab_size, d]),
        ("embed.positions".into(), vec![c.max_seq_len, d]),
        ("encoder.proj.w".into(), vec![c.d_in, d]),
        ("encoder.proj.b".into(), vec![d]),
    ];
    let ln = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
        out.push((format!("{p}.g"), vec![d]));
        out.push((format!("{p}.b"), vec![d]));
    };
    let attn = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            out.push((format!("{p}.{w}"), vec![d, d]));
        }
    };
    let ff = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
        out.push((format!("{p}.w1"), vec![d, f]));
        out.push((format!("{p}.b1"), vec![f]));
        out.push((format!("{p}.w2"), vec![f, d]));
        out.push((format!("{p}.b2"), vec![d]));
    };
    for i in 0..c.n_layers {
        ln(&mut out, &format!("encoder.{i}.ln1"));
        attn(&mut out, &format!("encoder.{i}.attn"));
        ln(&mut out, &format!("encoder.{i}.ln2"));
        ff(&mut out, &format!("encoder.{i}.ff"));
    }
    ln(&mut out, "encoder.ln_f");
    for i in 0..c.n_layers {
        ln(&mut out, &format!("decoder.{i}.ln1"));
        attn(&mut out, &format!("decoder.{i}.self_attn"));
        ln(&mut out, &format!("decoder.{i}.ln2"));
        attn(&mut out, &format!("decoder.{i}.cross_attn"));
        ln(&mut out, &format!("decoder.{i}.ln3"));
        ff(&mut out, &format!("decoder.{i}.ff"));
    }
    ln(&mut out, "decoder.ln_f");
    out.push(("heads.image_proj.w".into(), vec![d, c.d_proj]));
    out.push(("heads.text_proj.w".into(), vec![d, c.d_proj]));
    out.push(("heads.match.w".into(), vec![d, 2]));
    out.push(("heads.match.b".into(), vec![2]));
    for i in 0..c.n_styles {
        out.push((prompt_param_name(i), vec![c.prompt_len, d]));
    }
    out
}

fn init_value(name: &str, shape: &[usize], n_layers: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let last = name.rsplit('.').next().unwrap_or("");
    match last {
        "g" => Tensor::full(shape, 1.0),
        "b" | "b1" | "b2" => Tensor::zeros(shape),
        "tokens" | "positions" => Tensor::randn(shape, EMBED_STD, rng),
        _ if is_prompt_param(name) => Tensor::randn(shape, EMBED_STD, rng),
        _ => {
            let mut std = 1.0 / (shape[0] as f64).sqrt();
            // residual-branch outputs start small so depth does not inflate activations
            if last == "wo" || last == "w2" {
                std /= (2.0 * n_layers as f64).sqrt();
            }
            Tensor::randn(shape, std, rng)
        }
    }
}

impl Ids {
    fn resolve(store: &ParamStore, c: &ModelConfig) -> Result<Ids> {
        let get = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        let ln = |p: String| -> Result<LnIds> {
            Ok(LnIds {
                g: get(format!("{p}.g"))?,
                b: get(format!("{p}.b"))?,
            })
        };
        let attn = |p: String| -> Result<AttnIds> {
            Ok(AttnIds {
                wq: get(format!("{p}.wq"))?,
                wk: get(format!("{p}.wk"))?,
                wv: get(format!("{p}.wv"))?,
                wo: get(format!("{p}.wo"))?,
            })
        };
        let ff = |p: String| -> Result<FfIds> {
            Ok(FfIds {
                w1: get(format!("{p}.w1"))?,
                b1: get(format!("{p}.b1"))?,
                w2: get(format!("{p}.w2"))?,
                b2: get(format!("{p}.b2"))?,
            })
        };
        let encoder = (0..c.n_layers)
            .map(|i| {
                Ok(EncoderLayer {
                    ln1: ln(format!("encoder.{i}.ln1"))?,
                    attn: attn(format!("encoder.{i}.attn"))?,
                    ln2: ln(format!("encoder.{i}.ln2"))?,
                    ff: ff(format!("encoder.{i}.ff"))?,
                })
            })
            .collect::<Result<_>>()?;
        let decoder = (0..c.n_layers)
            .map(|i| {
                Ok(DecoderLayer {
                    ln1: ln(format!("decoder.{i}.ln1"))?,
                    self_attn: attn(format!("decoder.{i}.self_attn"))?,
                    ln2: ln(format!("decoder.{i}.ln2"))?,
                    cross_attn: attn(format!("decoder.{i}.cross_attn"))?,
                    ln3: ln(format!("decoder.{i}.ln3"))?,
                    ff: ff(format!("decoder.{i}.ff"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Ids {
            tokens: get("embed.tokens".into())?,
            positions: get("embed.positions".into())?,
            proj_w: get("encoder.proj.w".into())?,
            proj_b: get("encoder.proj.b".into())?,
            encoder,
            encoder_ln: ln("encoder.ln_f".into())?,
            decoder,
            decoder_ln: ln("decoder.ln_f".into())?,
            image_proj: get("heads.image_proj.w".into())?,
            text_proj: get("heads.text_proj.w".into())?,
            match_w: get("heads.match.w".into())?,
            match_b: get("heads.match.b".into())?,
            prompts: (0..c.n_styles).map(|i| get(prompt_param_name(i))).collect::<Result<_>>()?,
        })
    }
}

/// An embedded text stream with its next-token targets.
#[derive(Clone, Debug)]
pub struct TextStream {
    /// `T x d_model` input rows, positions included.
    pub x: Var,
    /// Target id per position; `PAD` where the mask is off.
    pub targets: Vec<usize>,
    /// True at positions whose target is a caption token or the final EOS.
    pub mask: Vec<bool>,
    /// Rows between BOS and the first caption token.
    pub prompt_len: usize,
}

impl TextStream {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// The captioning network.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    pub(crate) ids: Ids,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl Model {
    /// Freshly initialized model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in layout(&config) {
            let t = init_value(&name, &shape, config.n_layers, &mut rng);
            params.add(name, t);
        }
        let ids = Ids::resolve(&params, &config)?;
        Ok(Model { config, params, ids })
    }

    /// Wraps loaded parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Model> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params
                .by_name(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let ids = Ids::resolve(&params, &config)?;
        Ok(Model { config, params, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn token_embedding_id(&self) -> ParamId {
        self.ids.tokens
    }

    pub fn prompt_id(&self, bank_index: usize) -> Result<ParamId> {
        self.ids
            .prompts
            .get(bank_index)
            .copied()
            .ok_or_else(|| Error::UnknownStyle {
                given: bank_index.to_string(),
                valid: format!("bank indices 0..{}", self.config.n_styles),
            })
    }

    /// Re-draws every prompt matrix with `prompt_len` rows.
    pub fn reset_prompt_bank(&mut self, prompt_len: usize, seed: u64) -> Result<()> {
        let config = ModelConfig { prompt_len, ..self.config };
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..config.n_styles {
            let id = self.ids.prompts[i];
            let trainable = self.params.get(id).requires_grad();
            let mut t = Tensor::randn(&[prompt_len, config.d_model], EMBED_STD, &mut rng);
            t.set_requires_grad(trainable);
            self.params.reset(id, t);
        }
        self.config = config;
        Ok(())
    }

    fn p<'a>(&'a self, tape: &mut Tape<'a>, id: ParamId) -> Var {
        tape.param(&self.params, id)
    }

    fn ln<'a>(&'a self, tape: &mut Tape<'a>, ids: LnIds, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x)?;
        let g = self.p(tape, ids.g);
        let b = self.p(tape, ids.b);
        let y = tape.mul(n, g)?;
        tape.add(y, b)
    }

    fn attention<'a>(&'a self, tape: &mut Tape<'a>, ids: AttnIds, x: Var, ctx: Var, mask: Option<Var>) -> Result<Var> {
        let (wq, wk, wv, wo) = (
            self.p(tape, ids.wq),
            self.p(tape, ids.wk),
            self.p(tape, ids.wv),
            self.p(tape, ids.wo),
        );
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(ctx, wk)?;
        let v = tape.matmul(ctx, wv)?;
        let (h, dh) = (self.config.n_heads, self.config.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(h);
        for i in 0..h {
            let (s, e) = (i * dh, (i + 1) * dh);
            let (qh, kh, vh) = if h == 1 {
                (q, k, v)
            } else {
                (tape.slice(q, 1, s, e)?, tape.slice(k, 1, s, e)?, tape.slice(v, 1, s, e)?)
            };
            let kt = tape.transpose(kh)?;
            let mut scores = tape.matmul(qh, kt)?;
            scores = tape.scale(scores, scale)?;
            if let Some(m) = mask {
                scores = tape.add(scores, m)?;
            }
            let a = tape.softmax(scores)?;
            heads.push(tape.matmul(a, vh)?);
        }
        let cat = if h == 1 { heads[0] } else { tape.concat(&heads, 1)? };
        tape.matmul(cat, wo)
    }

    fn feed_forward<'a>(&'a self, tape: &mut Tape<'a>, ids: FfIds, x: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (
            self.p(tape, ids.w1),
            self.p(tape, ids.b1),
            self.p(tape, ids.w2),
            self.p(tape, ids.b2),
        );
        let mut h = tape.matmul(x, w1)?;
        h = tape.add(h, b1)?;
        h = tape.gelu(h)?;
        h = tape.matmul(h, w2)?;
        tape.add(h, b2)
    }

    /// Visual encoder: `M x d_in` scene rows to `M x d_model` memory.
    pub fn encode_image<'a>(&'a self, tape: &mut Tape<'a>, features: &Tensor) -> Result<Var> {
        let sh = features.shape();
        if sh.len() != 2 || sh[1] != self.config.d_in {
            return Err(Error::shape("encode_image", sh, &[0, self.config.d_in]));
        }
        let f = tape.constant(features.clone());
        let w = self.p(tape, self.ids.proj_w);
        let b = self.p(tape, self.ids.proj_b);
        let mut x = tape.matmul(f, w)?;
        x = tape.add(x, b)?;
        for layer in &self.ids.encoder {
            let h = self.ln(tape, layer.ln1, x)?;
            let a = self.attention(tape, layer.attn, h, h, None)?;
            x = tape.add(x, a)?;
            let h = self.ln(tape, layer.ln2, x)?;
            let f = self.feed_forward(tape, layer.ff, h)?;
            x = tape.add(x, f)?;
        }
        self.ln(tape, self.ids.encoder_ln, x)
    }

    fn check_tokens(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&t| t >= self.config.vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                size: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Adds positional rows `0..T` to a `T x d` stream.
    fn add_positions<'a>(&'a self, tape: &mut Tape<'a>, x: Var, len: usize) -> Result<Var> {
        if len > self.config.max_seq_len {
            return Err(Error::InvalidArgument(format!(
                "text stream of {len} positions exceeds the maximum of {}",
                self.config.max_seq_len
            )));
        }
        let table = self.p(tape, self.ids.positions);
        let pos = tape.slice(table, 0, 0, len)?;
        tape.add(x, pos)
    }

    /// Builds `[BOS] + prompt + caption` with its targets and loss mask.
    pub fn assemble_text_stream<'a>(&'a self, tape: &mut Tape<'a>, prompt: &Prompt, caption: &[usize]) -> Result<TextStream> {
        self.check_tokens(caption)?;
        let table = self.p(tape, self.ids.tokens);
        let (x, prompt_len) = match prompt {
            Prompt::Empty | Prompt::Manual(_) => {
                let manual: &[usize] = match prompt {
                    Prompt::Manual(ids) => ids,
                    _ => &[],
                };
                self.check_tokens(manual)?;
                let ids: Vec<usize> = std::iter::once(BOS).chain(manual.iter().copied()).chain(caption.iter().copied()).collect();
                (tape.embedding(table, &ids)?, manual.len())
            }
            Prompt::Learned(i) => {
                let pid = self.prompt_id(*i)?;
                let bos = tape.embedding(table, &[BOS])?;
                let p = self.p(tape, pid);
                let mut parts = vec![bos, p];
                if !caption.is_empty() {
                    parts.push(tape.embedding(table, caption)?);
                }
                (tape.concat(&parts, 0)?, self.config.prompt_len)
            }
        };
        let len = 1 + prompt_len + caption.len();
        let x = self.add_positions(tape, x, len)?;
        let mut targets = vec![PAD; len];
        let mut mask = vec![false; len];
        for t in prompt_len..len {
            let c = t - prompt_len;
            targets[t] = caption.get(c).copied().unwrap_or(EOS);
            mask[t] = true;
        }
        Ok(TextStream {
            x,
            targets,
            mask,
            prompt_len,
        })
    }

    fn causal_mask(len: usize) -> Tensor {
        let mut data = vec![0.0; len * len];
        for i in 0..len {
            for j in i + 1..len {
                data[i * len + j] = MASKED;
            }
        }
        Tensor::from_parts(vec![len, len], data)
    }

    /// Decoder stack over a `T x d` stream, returning final hidden states.
    ///
    /// With `memory` absent the cross-attention sublayers are skipped, which
    /// makes the stack a text-only encoder.
    pub fn decode<'a>(&'a self, tape: &mut Tape<'a>, x: Var, memory: Option<Var>, causal: bool) -> Result<Var> {
        let len = tape.value(x).shape()[0];
        let mask = causal.then(|| tape.constant(Self::causal_mask(len)));
        let mut x = x;
        for layer in &self.ids.decoder {
            let h = self.ln(tape, layer.ln1, x)?;
            let a = self.attention(tape, layer.self_attn, h, h, mask)?;
            x = tape.add(x, a)?;
            if let Some(mem) = memory {
                let h = self.ln(tape, layer.ln2, x)?;
                let a = self.attention(tape, layer.cross_attn, h, mem, None)?;
                x = tape.add(x, a)?;
            }
            let h = self.ln(tape, layer.ln3, x)?;
            let f = self.feed_forward(tape, layer.ff, h)?;
            x = tape.add(x, f)?;
        }
        self.ln(tape, self.ids.decoder_ln, x)
    }

    /// Next-token logits (`T x V`) for a text stream conditioned on `memory`.
    pub fn forward_lm<'a>(&'a self, tape: &mut Tape<'a>, memory: Var, stream: Var) -> Result<Var> {
        let h = self.decode(tape, stream, Some(memory), true)?;
        let table = self.p(tape, self.ids.tokens);
        let et = tape.transpose(table)?;
        tape.matmul(h, et)
    }

    /// Mean next-token cross-entropy of `caption` (and the closing EOS)
    /// given the scene and the prompt.
    pub fn caption_loss<'a>(&'a self, tape: &mut Tape<'a>, features: &Tensor, prompt: &Prompt, caption: &[usize]) -> Result<Var> {
        if caption.is_empty() {
            return Err(Error::InvalidArgument("empty caption".into()));
        }
        let memory = self.encode_image(tape, features)?;
        let stream = self.assemble_text_stream(tape, prompt, caption)?;
        let logits = self.forward_lm(tape, memory, stream.x)?;
        tape.cross_entropy(logits, &stream.targets, &stream.mask)
    }

    /// `[CLS] + caption` through the decoder stack without a causal mask;
    /// returns the CLS row (`1 x d`).
    pub fn cls_state<'a>(&'a self, tape: &mut Tape<'a>, caption: &[usize], memory: Option<Var>) -> Result<Var> {
        self.check_tokens(caption)?;
        let ids: Vec<usize> = std::iter::once(CLS).chain(caption.iter().copied()).collect();
        let table = self.p(tape, self.ids.tokens);
        let x = tape.embedding(table, &ids)?;
        let x = self.add_positions(tape, x, ids.len())?;
        let h = self.decode(tape, x, memory, false)?;
        tape.slice(h, 0, 0, 1)
    }

    /// Mean-pooled visual memory projected to the contrastive space (`1 x p`).
    pub fn image_embedding<'a>(&'a self, tape: &mut Tape<'a>, memory: Var) -> Result<Var> {
        let m = tape.value(memory).shape()[0];
        let pool = tape.constant(Tensor::full(&[1, m], 1.0 / m as f64));
        let pooled = tape.matmul(pool, memory)?;
        let w = self.p(tape, self.ids.image_proj);
        tape.matmul(pooled, w)
    }

    /// Text-only CLS state projected to the contrastive space (`1 x p`).
    pub fn text_embedding<'a>(&'a self, tape: &mut Tape<'a>, caption: &[usize]) -> Result<Var> {
        let cls = self.cls_state(tape, caption, None)?;
        let w = self.p(tape, self.ids.text_proj);
        tape.matmul(cls, w)
    }

    /// Matched/unmatched logits (`1 x 2`) from a cross-attention pass.
    pub fn match_logits<'a>(&'a self, tape: &mut Tape<'a>, memory: Var, caption: &[usize]) -> Result<Var> {
        let cls = self.cls_state(tape, caption, Some(memory))?;
        let w = self.p(tape, self.ids.match_w);
        let b = self.p(tape, self.ids.match_b);
        let y = tape.matmul(cls, w)?;
        tape.add(y, b)
    }
}
