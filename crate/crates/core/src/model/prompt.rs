use std::fmt;
use std::str::FromStr;

use crate::corpus::{Style, SHARED_PROMPT};
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

/// How a style conditions the text stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptMode {
    /// Plain captioning: nothing between BOS and the caption.
    None,
    /// One hand-written prompt for every style.
    SharedManual,
    /// One hand-written prompt per style.
    MultiManual,
    /// One learned prompt matrix per style.
    MultiAuto,
}

impl PromptMode {
    pub const ALL: [PromptMode; 4] = [
        PromptMode::None,
        PromptMode::SharedManual,
        PromptMode::MultiManual,
        PromptMode::MultiAuto,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PromptMode::None => "none",
            PromptMode::SharedManual => "shared-manual",
            PromptMode::MultiManual => "multi-manual",
            PromptMode::MultiAuto => "multi-auto",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// The prompt a record of `style` is conditioned on.
    pub fn prompt_for(self, style: Style, vocab: &Vocabulary) -> Result<Prompt> {
        let manual = |text: &str| -> Result<Prompt> {
            let ids = vocab.encode(text);
            if ids.contains(&crate::tokenizer::UNK) {
                return Err(Error::VocabMismatch(format!("prompt `{text}` has words outside the vocabulary")));
            }
            Ok(Prompt::Manual(ids))
        };
        match self {
            PromptMode::None => Ok(Prompt::Empty),
            PromptMode::SharedManual => manual(SHARED_PROMPT),
            PromptMode::MultiManual => manual(style.manual_prompt()),
            PromptMode::MultiAuto => Ok(Prompt::Learned(style.index())),
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('_', "-");
        Self::ALL.into_iter().find(|m| m.tag() == norm).ok_or_else(|| {
            Error::Config(format!(
                "unknown prompt mode `{s}`; expected one of none, shared-manual, multi-manual, multi-auto"
            ))
        })
    }
}

/// What sits between BOS and the caption in a text stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Prompt {
    Empty,
    /// Token ids embedded through the shared token table.
    Manual(Vec<usize>),
    /// Index into the learned prompt bank.
    Learned(usize),
}
