//! Visual encoder, prompt-conditioned transformer decoder and the
//! pre-training heads.

mod cache;
mod config;
mod heads;
mod network;
mod prompt;

pub use cache::{DecoderState, VisualContext};
pub use config::ModelConfig;
pub use heads::{derangement, info_nce, nearest_vocab, Pair, TEMPERATURE};
pub use network::{is_prompt_param, prompt_param_name, Model, TextStream};
pub use prompt::{Prompt, PromptMode};
