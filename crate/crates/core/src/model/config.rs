use crate::corpus::{SceneParams, Style};
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Width of one scene feature row.
    pub d_in: usize,
    /// Longest text stream (BOS, prompt and caption) the positional table covers.
    pub max_seq_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Rows per learned prompt matrix.
    pub prompt_len: usize,
    pub n_styles: usize,
    pub d_proj: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, d_in: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_in,
            max_seq_len: 80,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 256,
            prompt_len: 16,
            n_styles: Style::ALL.len(),
            d_proj: 32,
        }
    }

    /// Defaults sized for the default scene distribution.
    pub fn for_scenes(vocab_size: usize, scene: &SceneParams) -> Self {
        Self::new(vocab_size, scene.feature_width())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size < 6 {
            return bad("vocabulary must hold the special tokens and at least one word");
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.d_in == 0 || self.d_ff == 0 || self.d_proj == 0 || self.n_layers == 0 {
            return bad("d_in, d_ff, d_proj and n_layers must be positive");
        }
        if self.prompt_len == 0 || self.n_styles == 0 {
            return bad("prompt length and style count must be at least 1");
        }
        if self.max_seq_len < self.prompt_len + 2 {
            return bad("max_seq_len must exceed the prompt length by at least 2");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Number of scalar parameters:
    ///
    /// ```text
    /// embeddings  (V + L) d
    /// encoder     d_in d + d + n (4d^2 + 4d + F) + 2d
    /// decoder     n (8d^2 + 6d + F) + 2d
    /// heads       2 d p + 2d + 2
    /// prompts     S N d
    /// ```
    ///
    /// with `F = 2 d d_ff + d_ff + d` the feed-forward block.
    pub fn param_count(&self) -> usize {
        let (d, n) = (self.d_model, self.n_layers);
        let ff = 2 * d * self.d_ff + self.d_ff + d;
        let embed = (self.vocab_size + self.max_seq_len) * d;
        let encoder = self.d_in * d + d + n * (4 * d * d + 4 * d + ff) + 2 * d;
        let decoder = n * (8 * d * d + 6 * d + ff) + 2 * d;
        let heads = 2 * d * self.d_proj + 2 * d + 2;
        let prompts = self.n_styles * self.prompt_len * d;
        embed + encoder + decoder + heads + prompts
    }
}
