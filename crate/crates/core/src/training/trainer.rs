use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{derive_seed, CaptionRecord};
use crate::error::{Error, Result};
use crate::model::{is_prompt_param, Model, Pair, PromptMode};
use crate::numerics::{AdamW, AdamWConfig, Tape};
use crate::tokenizer::Vocabulary;
use crate::training::losses::{apply_gradients, batch_caption_loss, encode_records, pretrain_step, Example};
use crate::training::{lr_schedule, Phase, TrainConfig, Trainable};

/// Loss values of one optimizer step. Terms that do not apply are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub lm: f64,
    pub contrastive: f64,
    pub matching: f64,
    pub total: f64,
}

/// Per-epoch means of the step losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub lm: f64,
    pub contrastive: f64,
    pub matching: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub trace: Vec<StepRecord>,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
    pub eval_summary: Option<String>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.total)
    }

    /// Plain `key=value` summary.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("phase", c.phase.to_string());
        kv("prompt_mode", c.prompt_mode.to_string());
        kv("trainable", c.trainable.to_string());
        kv("epochs", c.epochs.to_string());
        kv("batch_size", c.batch_size.to_string());
        kv("lr", c.lr.to_string());
        kv("seed", c.seed.to_string());
        kv("steps", self.trace.len().to_string());
        kv("wall_clock_secs", format!("{:.3}", self.wall_clock_secs));
        for (i, e) in self.epochs.iter().enumerate() {
            kv(&format!("epoch.{i}.lm"), format!("{:.6}", e.lm));
            if c.phase == Phase::Pretrain {
                kv(&format!("epoch.{i}.contrastive"), format!("{:.6}", e.contrastive));
                kv(&format!("epoch.{i}.matching"), format!("{:.6}", e.matching));
            }
            kv(&format!("epoch.{i}.total"), format!("{:.6}", e.total));
        }
        if let Some(p) = &self.checkpoint {
            kv("checkpoint", p.display().to_string());
        }
        if let Some(e) = &self.eval_summary {
            kv("eval", e.clone());
        }
        s
    }

    /// One CSV row per optimizer step.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,epoch,lr,lm,contrastive,matching,total\n");
        for r in &self.trace {
            writeln!(
                s,
                "{},{},{:e},{:.8},{:.8},{:.8},{:.8}",
                r.step, r.epoch, r.lr, r.lm, r.contrastive, r.matching, r.total
            )
            .unwrap();
        }
        s
    }
}

/// Marks which parameters the run may change.
///
/// The prompt bank is only trained when records are conditioned on it.
pub fn set_trainable(model: &mut Model, config: &TrainConfig) {
    let bank = config.prompt_mode == PromptMode::MultiAuto;
    let trainable = config.trainable;
    model.params_mut().set_trainable(|name| match (trainable, is_prompt_param(name)) {
        (Trainable::PromptsOnly, p) => p,
        (Trainable::All, true) => bank,
        (Trainable::All, false) => true,
    });
}

/// Splits a shuffled order into batches; a trailing batch smaller than
/// `min_last` is folded into the one before it.
fn batches(order: &[usize], size: usize, min_last: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() < min_last) {
        let n = out.len();
        let start = (n - 2) * size;
        out.truncate(n - 2);
        out.push(&order[start..]);
    }
    out
}

/// Progress callback arguments.
pub enum Progress<'r> {
    Step(&'r StepRecord),
    Epoch(usize, &'r EpochStats),
}

pub fn train(model: &mut Model, records: &[CaptionRecord], vocab: &Vocabulary, config: &TrainConfig) -> Result<TrainReport> {
    train_with(model, records, vocab, config, &mut |_| {})
}

/// Trains `model` in place on `records`.
///
/// Everything is checked before the first step: the configuration, the
/// vocabulary size against the model, and every caption against the
/// vocabulary.
pub fn train_with(
    model: &mut Model,
    records: &[CaptionRecord],
    vocab: &Vocabulary,
    config: &TrainConfig,
    progress: &mut dyn FnMut(Progress<'_>),
) -> Result<TrainReport> {
    config.validate()?;
    if vocab.len() != model.config().vocab_size {
        return Err(Error::VocabMismatch(format!(
            "model expects {} tokens, vocabulary has {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let examples = encode_records(records, vocab, config.prompt_mode)?;
    let started = Instant::now();

    set_trainable(model, config);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        model.params(),
    );
    let min_last = if config.phase == Phase::Pretrain { 2 } else { 1 };
    let per_epoch = batches(&(0..examples.len()).collect::<Vec<_>>(), config.batch_size, min_last).len();
    let total_steps = per_epoch * config.epochs;

    let mut trace = Vec::with_capacity(total_steps);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64)));
        let mut sum = EpochStats::default();
        let groups = batches(&order, config.batch_size, min_last);
        for group in &groups {
            let lr = lr_schedule(step, total_steps, config.warmup_steps, config.lr, config.decay);
            let batch: Vec<&Example> = group.iter().map(|&i| &examples[i]).collect();
            let rec = match config.phase {
                Phase::Pretrain => {
                    let pairs: Vec<Pair<'_>> = batch.iter().map(|e| (&e.features, e.caption.as_slice())).collect();
                    let seed = derive_seed(config.seed ^ 0x006d_6174_6368, step as u64);
                    let l = pretrain_step(model, &mut opt, &pairs, seed, lr, config.clip_norm)?;
                    StepRecord {
                        step,
                        epoch,
                        lr,
                        lm: l.lm,
                        contrastive: l.contrastive,
                        matching: l.matching,
                        total: l.total,
                    }
                }
                Phase::Finetune => {
                    let (loss, grads) = {
                        let mut tape = Tape::new();
                        let l = batch_caption_loss(model, &mut tape, &batch)?;
                        (tape.value(l).item(), tape.backward(l)?.into_param_grads(&tape))
                    };
                    apply_gradients(model, &mut opt, grads, lr, config.clip_norm)?;
                    StepRecord {
                        step,
                        epoch,
                        lr,
                        lm: loss,
                        contrastive: 0.0,
                        matching: 0.0,
                        total: loss,
                    }
                }
            };
            sum.lm += rec.lm;
            sum.contrastive += rec.contrastive;
            sum.matching += rec.matching;
            sum.total += rec.total;
            progress(Progress::Step(&rec));
            trace.push(rec);
            step += 1;
        }
        let n = groups.len() as f64;
        let stats = EpochStats {
            lm: sum.lm / n,
            contrastive: sum.contrastive / n,
            matching: sum.matching / n,
            total: sum.total / n,
        };
        progress(Progress::Epoch(epoch, &stats));
        epochs.push(stats);
    }
    let store = model.params_mut();
    store.zero_grads();
    store.set_trainable(|_| true);
    Ok(TrainReport {
        config: *config,
        epochs,
        trace,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoint: None,
        eval_summary: None,
    })
}
