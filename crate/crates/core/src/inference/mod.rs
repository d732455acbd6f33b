//! Prompt-conditioned caption generation.

mod search;

use std::fmt;
use std::str::FromStr;

pub use search::{beam_search, greedy, DecodeResult, Hypothesis, StepModel};

use crate::corpus::Style;
use crate::error::{Error, Result};
use crate::model::{DecoderState, Model, Prompt, PromptMode, VisualContext};
use crate::numerics::Tensor;
use crate::tokenizer::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam,
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "greedy" => Ok(DecodeMode::Greedy),
            "beam" => Ok(DecodeMode::Beam),
            _ => Err(Error::Config(format!("unknown decode mode `{s}`; expected greedy or beam"))),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam_size: usize,
    /// Generation budget with EOS counted; `None` uses the style's default.
    pub max_len: Option<usize>,
    /// Length-normalization exponent for ranking finished beams.
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Beam,
            beam_size: 3,
            max_len: None,
            alpha: 0.7,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        DecodeConfig {
            mode: DecodeMode::Greedy,
            ..Self::default()
        }
    }

    pub fn beam(beam_size: usize, alpha: f64) -> Self {
        DecodeConfig {
            mode: DecodeMode::Beam,
            beam_size,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_len == Some(0) {
            return Err(Error::Config("beam size and max length must be at least 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config("length-normalization exponent must be non-negative".into()));
        }
        Ok(())
    }
}

/// The captioning network seen as a [`StepModel`] for one encoded scene.
pub struct ModelStepper<'m> {
    pub model: &'m Model,
    pub context: VisualContext,
}

impl StepModel for ModelStepper<'_> {
    type State = DecoderState;

    fn advance(&self, state: &mut DecoderState, token: usize) -> Result<Vec<f64>> {
        let row = self.model.token_row(token)?;
        self.model.step(&self.context, state, row)
    }
}

/// Decodes a caption for `features` conditioned on `prompt`.
pub fn caption(model: &Model, features: &Tensor, prompt: &Prompt, config: &DecodeConfig, max_len: usize) -> Result<DecodeResult> {
    config.validate()?;
    let stepper = ModelStepper {
        model,
        context: model.visual_context(features)?,
    };
    let (state, logits) = model.start(&stepper.context, prompt)?;
    // the last generated token is never fed back, so the stream holds
    // prefix + max_len - 1 positions at most
    let room = model.config().max_seq_len + 1 - state.len();
    let max_len = max_len.min(room);
    match config.mode {
        DecodeMode::Greedy => greedy(&stepper, state, logits, max_len),
        DecodeMode::Beam => beam_search(&stepper, state, logits, max_len, config.beam_size, config.alpha),
    }
}

/// A model paired with its vocabulary and prompt mode.
pub struct Captioner<'m> {
    pub model: &'m Model,
    pub vocab: &'m Vocabulary,
    pub mode: PromptMode,
}

impl<'m> Captioner<'m> {
    pub fn new(model: &'m Model, vocab: &'m Vocabulary, mode: PromptMode) -> Self {
        Captioner { model, vocab, mode }
    }

    pub fn caption(&self, features: &Tensor, style: Style, config: &DecodeConfig) -> Result<DecodeResult> {
        let prompt = self.mode.prompt_for(style, self.vocab)?;
        let max_len = config.max_len.unwrap_or_else(|| style.default_max_len());
        caption(self.model, features, &prompt, config, max_len)
    }

    /// Like [`Captioner::caption`] with the style given by tag.
    pub fn caption_tag(&self, features: &Tensor, tag: &str, config: &DecodeConfig) -> Result<DecodeResult> {
        self.caption(features, tag.parse()?, config)
    }

    /// Caption tokens as words.
    pub fn words(&self, result: &DecodeResult) -> Result<Vec<String>> {
        Ok(self
            .vocab
            .decode_tokens(result.tokens())?
            .into_iter()
            .map(str::to_string)
            .collect())
    }

    pub fn caption_words(&self, features: &Tensor, style: Style, config: &DecodeConfig) -> Result<Vec<String>> {
        self.words(&self.caption(features, style, config)?)
    }
}
