//! `key=value` run configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::inference::DecodeConfig;
use crate::model::{ModelConfig, PromptMode};
use crate::training::{Trainable, TrainConfig};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "model initialization and training-order seed"),
    ("corpus.seed", "scene and caption generation seed"),
    ("corpus.coco", "coco-style training records"),
    ("corpus.textcap", "textcap-style training records"),
    ("corpus.short", "short-style training records"),
    ("corpus.medium", "medium-style training records"),
    ("corpus.long", "long-style training records"),
    ("corpus.positive", "positive-style training records"),
    ("corpus.negative", "negative-style training records"),
    ("corpus.eval_scenes", "held-out scenes"),
    ("corpus.eval_refs", "references per held-out scene and style"),
    ("corpus.eval_text_probability", "chance a held-out scene carries text"),
    ("model.max_seq_len", "longest text stream (BOS, prompt, caption)"),
    ("model.d_model", "hidden width"),
    ("model.n_layers", "layers in the encoder and in the decoder"),
    ("model.n_heads", "attention heads"),
    ("model.d_ff", "feed-forward width"),
    ("model.prompt_len", "rows per learned prompt (N)"),
    ("model.d_proj", "contrastive projection width"),
    ("pretrain.epochs", "pre-training epochs"),
    ("pretrain.batch_size", "pre-training batch size"),
    ("pretrain.lr", "pre-training peak learning rate"),
    ("pretrain.warmup_steps", "pre-training warmup steps"),
    ("pretrain.decay", "pre-training schedule after warmup: linear or constant"),
    ("pretrain.weight_decay", "pre-training AdamW weight decay"),
    ("pretrain.clip_norm", "pre-training gradient-norm clip, 0 disables"),
    ("finetune.prompt_mode", "none, shared-manual, multi-manual or multi-auto"),
    ("finetune.trainable", "all or prompts-only"),
    ("finetune.epochs", "fine-tuning epochs"),
    ("finetune.batch_size", "fine-tuning batch size"),
    ("finetune.lr", "fine-tuning peak learning rate"),
    ("finetune.warmup_steps", "fine-tuning warmup steps"),
    ("finetune.decay", "fine-tuning schedule after warmup: linear or constant"),
    ("finetune.weight_decay", "fine-tuning AdamW weight decay"),
    ("finetune.clip_norm", "fine-tuning gradient-norm clip, 0 disables"),
    ("decode.mode", "greedy or beam"),
    ("decode.beam_size", "beam width"),
    ("decode.max_len", "generation budget with EOS, or auto (40, 60 for medium/long)"),
    ("decode.alpha", "length-normalization exponent"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    /// Architecture; vocabulary size and feature width come from the corpus.
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub decode: DecodeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            corpus: CorpusConfig::default(),
            model: ModelConfig::new(0, 0),
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(PromptMode::MultiAuto, Trainable::All),
            decode: DecodeConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: invalid value `{value}`")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key `{k}` given twice", i + 1)));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let c = &mut self.corpus;
        let m = &mut self.model;
        let (p, f, d) = (&mut self.pretrain, &mut self.finetune, &mut self.decode);
        match key {
            "seed" => self.seed = parse(key, v)?,
            "corpus.seed" => c.seed = parse(key, v)?,
            "corpus.coco" => c.coco = parse(key, v)?,
            "corpus.textcap" => c.textcap = parse(key, v)?,
            "corpus.short" => c.short = parse(key, v)?,
            "corpus.medium" => c.medium = parse(key, v)?,
            "corpus.long" => c.long = parse(key, v)?,
            "corpus.positive" => c.positive = parse(key, v)?,
            "corpus.negative" => c.negative = parse(key, v)?,
            "corpus.eval_scenes" => c.eval_scenes = parse(key, v)?,
            "corpus.eval_refs" => c.eval_refs = parse(key, v)?,
            "corpus.eval_text_probability" => c.eval_text_probability = parse(key, v)?,
            "model.max_seq_len" => m.max_seq_len = parse(key, v)?,
            "model.d_model" => m.d_model = parse(key, v)?,
            "model.n_layers" => m.n_layers = parse(key, v)?,
            "model.n_heads" => m.n_heads = parse(key, v)?,
            "model.d_ff" => m.d_ff = parse(key, v)?,
            "model.prompt_len" => m.prompt_len = parse(key, v)?,
            "model.d_proj" => m.d_proj = parse(key, v)?,
            "pretrain.epochs" => p.epochs = parse(key, v)?,
            "pretrain.batch_size" => p.batch_size = parse(key, v)?,
            "pretrain.lr" => p.lr = parse(key, v)?,
            "pretrain.warmup_steps" => p.warmup_steps = parse(key, v)?,
            "pretrain.decay" => p.decay = v.parse()?,
            "pretrain.weight_decay" => p.weight_decay = parse(key, v)?,
            "pretrain.clip_norm" => p.clip_norm = parse(key, v)?,
            "finetune.prompt_mode" => f.prompt_mode = v.parse()?,
            "finetune.trainable" => f.trainable = v.parse()?,
            "finetune.epochs" => f.epochs = parse(key, v)?,
            "finetune.batch_size" => f.batch_size = parse(key, v)?,
            "finetune.lr" => f.lr = parse(key, v)?,
            "finetune.warmup_steps" => f.warmup_steps = parse(key, v)?,
            "finetune.decay" => f.decay = v.parse()?,
            "finetune.weight_decay" => f.weight_decay = parse(key, v)?,
            "finetune.clip_norm" => f.clip_norm = parse(key, v)?,
            "decode.mode" => d.mode = v.parse()?,
            "decode.beam_size" => d.beam_size = parse(key, v)?,
            "decode.max_len" => d.max_len = if v == "auto" { None } else { Some(parse(key, v)?) },
            "decode.alpha" => d.alpha = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        self.pretrain.seed = self.seed;
        self.finetune.seed = self.seed;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        fn s(v: impl Display) -> Option<String> {
            Some(v.to_string())
        }
        let (c, m, p, f, d) = (&self.corpus, &self.model, &self.pretrain, &self.finetune, &self.decode);
        match key {
            "seed" => s(self.seed),
            "corpus.seed" => s(c.seed),
            "corpus.coco" => s(c.coco),
            "corpus.textcap" => s(c.textcap),
            "corpus.short" => s(c.short),
            "corpus.medium" => s(c.medium),
            "corpus.long" => s(c.long),
            "corpus.positive" => s(c.positive),
            "corpus.negative" => s(c.negative),
            "corpus.eval_scenes" => s(c.eval_scenes),
            "corpus.eval_refs" => s(c.eval_refs),
            "corpus.eval_text_probability" => s(c.eval_text_probability),
            "model.max_seq_len" => s(m.max_seq_len),
            "model.d_model" => s(m.d_model),
            "model.n_layers" => s(m.n_layers),
            "model.n_heads" => s(m.n_heads),
            "model.d_ff" => s(m.d_ff),
            "model.prompt_len" => s(m.prompt_len),
            "model.d_proj" => s(m.d_proj),
            "pretrain.epochs" => s(p.epochs),
            "pretrain.batch_size" => s(p.batch_size),
            "pretrain.lr" => s(p.lr),
            "pretrain.warmup_steps" => s(p.warmup_steps),
            "pretrain.decay" => s(p.decay),
            "pretrain.weight_decay" => s(p.weight_decay),
            "pretrain.clip_norm" => s(p.clip_norm),
            "finetune.prompt_mode" => s(f.prompt_mode),
            "finetune.trainable" => s(f.trainable),
            "finetune.epochs" => s(f.epochs),
            "finetune.batch_size" => s(f.batch_size),
            "finetune.lr" => s(f.lr),
            "finetune.warmup_steps" => s(f.warmup_steps),
            "finetune.decay" => s(f.decay),
            "finetune.weight_decay" => s(f.weight_decay),
            "finetune.clip_norm" => s(f.clip_norm),
            "decode.mode" => s(d.mode),
            "decode.beam_size" => s(d.beam_size),
            "decode.max_len" => d.max_len.map_or_else(|| s("auto"), s),
            "decode.alpha" => s(d.alpha),
            _ => None,
        }
    }

    /// Every key with its current value, each preceded by its description.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, doc)| format!("# {doc}\n{k}={}\n", self.get(k).expect("documented key")))
            .collect()
    }

    /// Architecture for a given vocabulary and feature width.
    pub fn model_config(&self, vocab_size: usize, d_in: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_in,
            ..self.model
        }
    }

    pub fn validate(&self) -> Result<()> {
        let to_config = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            e => e,
        };
        self.pretrain.validate().map_err(to_config)?;
        self.finetune.validate().map_err(to_config)?;
        self.decode.validate()?;
        self.model_config(6, 1).validate()?;
        self.corpus.scene.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let d = RunConfig::default();
        for (k, _) in KEYS {
            assert!(d.get(k).is_some(), "{k}");
        }
        assert_eq!(RunConfig::parse(&d.to_text()).unwrap(), d);
        assert_eq!(RunConfig::parse("").unwrap(), d);
        let c = RunConfig::parse("seed = 9\n# note\nmodel.prompt_len=4\ndecode.max_len=12 # trailing\n").unwrap();
        assert_eq!((c.seed, c.finetune.seed, c.model.prompt_len, c.decode.max_len), (9, 9, 4, Some(12)));
    }

    #[test]
    fn default_prompt_length_and_beam() {
        let d = RunConfig::default();
        assert_eq!(d.model.prompt_len, 16);
        assert_eq!(d.decode.beam_size, 3);
        assert_eq!(d.decode.max_len, None);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in [
            "epochz=3",
            "seed",
            "seed=x",
            "seed=1\nseed=2",
            "finetune.trainable=prompts-only\nfinetune.prompt_mode=none",
            "decode.beam_size=0",
            "model.d_model=30\nmodel.n_heads=4",
        ] {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
        let e = RunConfig::parse("epochz=3").unwrap_err().to_string();
        assert!(e.contains("epochz"));
    }
}
