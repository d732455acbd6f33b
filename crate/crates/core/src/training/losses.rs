use crate::corpus::{CaptionRecord, Style};
use crate::error::{Error, Result};
use crate::model::{info_nce, Model, Pair, Prompt, PromptMode, TEMPERATURE};
use crate::numerics::{AdamW, ParamId, Tape, Tensor, Var};
use crate::tokenizer::{Vocabulary, UNK};

/// Plain captioning loss: `[BOS] + caption`, no prompt.
pub fn lm_loss<'a>(model: &'a Model, tape: &mut Tape<'a>, features: &Tensor, caption: &[usize]) -> Result<Var> {
    model.caption_loss(tape, features, &Prompt::Empty, caption)
}

/// Captioning loss with hand-written prompt tokens between BOS and the caption.
pub fn prolm_loss<'a>(
    model: &'a Model,
    tape: &mut Tape<'a>,
    prompt: &[usize],
    features: &Tensor,
    caption: &[usize],
) -> Result<Var> {
    model.caption_loss(tape, features, &Prompt::Manual(prompt.to_vec()), caption)
}

/// Captioning loss with a style's manual prompt looked up in `vocab`.
pub fn style_prolm_loss<'a>(
    model: &'a Model,
    tape: &mut Tape<'a>,
    vocab: &Vocabulary,
    style: Style,
    features: &Tensor,
    caption: &[usize],
) -> Result<Var> {
    let prompt = PromptMode::MultiManual.prompt_for(style, vocab)?;
    model.caption_loss(tape, features, &prompt, caption)
}

/// Captioning loss with learned prompt matrix `bank_index` prepended.
pub fn autoprolm_loss<'a>(
    model: &'a Model,
    tape: &mut Tape<'a>,
    bank_index: usize,
    features: &Tensor,
    caption: &[usize],
) -> Result<Var> {
    model.caption_loss(tape, features, &Prompt::Learned(bank_index), caption)
}

/// A record encoded for training: ids, features and the prompt it is
/// conditioned on.
#[derive(Clone, Debug)]
pub struct Example {
    pub features: Tensor,
    pub caption: Vec<usize>,
    pub style: Style,
    pub prompt: Prompt,
}

/// Encodes records under `mode`. Fails on words outside the vocabulary.
pub fn encode_records(records: &[CaptionRecord], vocab: &Vocabulary, mode: PromptMode) -> Result<Vec<Example>> {
    let prompts = Style::ALL
        .iter()
        .map(|&s| mode.prompt_for(s, vocab))
        .collect::<Result<Vec<_>>>()?;
    records
        .iter()
        .map(|r| {
            let caption = vocab.encode_tokens(&r.caption);
            if caption.contains(&UNK) {
                return Err(Error::VocabMismatch(format!(
                    "caption of scene {} has words outside the vocabulary",
                    r.scene_id
                )));
            }
            if caption.is_empty() {
                return Err(Error::InvalidArgument(format!("scene {} has an empty caption", r.scene_id)));
            }
            Ok(Example {
                features: r.features.clone(),
                caption,
                style: r.style,
                prompt: prompts[r.style.index()].clone(),
            })
        })
        .collect()
}

/// Mean over `batch` of the per-record caption loss.
pub fn batch_caption_loss<'a>(model: &'a Model, tape: &mut Tape<'a>, batch: &[&Example]) -> Result<Var> {
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let l = model.caption_loss(tape, &ex.features, &ex.prompt, &ex.caption)?;
        losses.push(l);
    }
    mean_of(tape, &losses)
}

fn mean_of(tape: &mut Tape<'_>, parts: &[Var]) -> Result<Var> {
    if parts.is_empty() {
        return Err(Error::EmptyLoss);
    }
    let cat = if parts.len() == 1 { parts[0] } else { tape.concat(parts, 0)? };
    tape.mean(cat)
}

/// The three pre-training terms and their unweighted sum.
#[derive(Clone, Copy, Debug)]
pub struct PretrainVars {
    pub lm: Var,
    pub contrastive: Var,
    pub matching: Var,
    pub total: Var,
}

/// Builds the pre-training objective for a batch of plain (scene, caption)
/// pairs; each scene is encoded once and shared by the three terms.
pub fn pretrain_losses<'a>(model: &'a Model, tape: &mut Tape<'a>, batch: &[Pair<'_>], seed: u64) -> Result<PretrainVars> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument("pre-training needs a batch of at least 2".into()));
    }
    let mut lms = Vec::with_capacity(batch.len());
    let mut memories = Vec::with_capacity(batch.len());
    let mut imgs = Vec::with_capacity(batch.len());
    let mut txts = Vec::with_capacity(batch.len());
    for (features, caption) in batch {
        if caption.is_empty() {
            return Err(Error::InvalidArgument("empty caption".into()));
        }
        let mem = model.encode_image(tape, features)?;
        let stream = model.assemble_text_stream(tape, &Prompt::Empty, caption)?;
        let logits = model.forward_lm(tape, mem, stream.x)?;
        let l = tape.cross_entropy(logits, &stream.targets, &stream.mask)?;
        lms.push(l);
        imgs.push(model.image_embedding(tape, mem)?);
        txts.push(model.text_embedding(tape, caption)?);
        memories.push(mem);
    }
    let lm = mean_of(tape, &lms)?;
    let img = tape.concat(&imgs, 0)?;
    let txt = tape.concat(&txts, 0)?;
    let contrastive = info_nce(tape, img, txt, TEMPERATURE)?;
    let matching = model.match_with_memories(tape, &memories, batch, seed)?;
    let s = tape.add(lm, contrastive)?;
    let total = tape.add(s, matching)?;
    Ok(PretrainVars {
        lm,
        contrastive,
        matching,
        total,
    })
}

/// Scalar values of one pre-training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainLosses {
    pub lm: f64,
    pub contrastive: f64,
    pub matching: f64,
    pub total: f64,
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_gradients(grads: &mut [(ParamId, Vec<f64>)], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|(_, g)| g.iter_mut().for_each(|x| *x *= s));
    }
    norm
}

/// Writes `grads` into the store and takes one optimizer step over the
/// trainable parameters.
pub fn apply_gradients(
    model: &mut Model,
    opt: &mut AdamW,
    mut grads: Vec<(ParamId, Vec<f64>)>,
    lr: f64,
    clip_norm: f64,
) -> Result<()> {
    clip_gradients(&mut grads, clip_norm);
    let store = model.params_mut();
    store.zero_grads();
    store.accumulate(&grads)?;
    let ids = store.trainable_ids();
    opt.step(store, &ids, lr)
}

/// One pre-training update: the summed objective, one backward pass and one
/// optimizer step.
pub fn pretrain_step(
    model: &mut Model,
    opt: &mut AdamW,
    batch: &[Pair<'_>],
    seed: u64,
    lr: f64,
    clip_norm: f64,
) -> Result<PretrainLosses> {
    let (losses, grads) = {
        let mut tape = Tape::new();
        let v = pretrain_losses(model, &mut tape, batch, seed)?;
        let value = |x: Var| tape.value(x).item();
        let losses = PretrainLosses {
            lm: value(v.lm),
            contrastive: value(v.contrastive),
            matching: value(v.matching),
            total: value(v.total),
        };
        let grads = tape.backward(v.total)?.into_param_grads(&tape);
        (losses, grads)
    };
    apply_gradients(model, opt, grads, lr, clip_norm)?;
    Ok(losses)
}

/// Mean caption loss over examples, without building gradients.
pub fn mean_caption_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for ex in examples {
        let mut tape = Tape::no_grad();
        let l = model.caption_loss(&mut tape, &ex.features, &ex.prompt, &ex.caption)?;
        total += tape.value(l).item();
    }
    Ok(total / examples.len() as f64)
}
