//! Command-line front end, checkpoints and run configuration.

pub mod ablate;
mod checkpoint;
mod commands;
mod config;
pub mod eval;

pub use checkpoint::{round_to_storage, Checkpoint, MAGIC, VERSION};
pub use commands::{
    cmd_ablate, cmd_caption, cmd_eval, cmd_finetune, cmd_gen_corpus, cmd_inspect_prompts, cmd_pretrain, execute, run,
    AblateArgs, CaptionArgs, Cli, Command, DecodeArgs, EvalArgs, FinetuneArgs, GenCorpusArgs, InspectArgs, TrainArgs,
};
pub use config::{RunConfig, KEYS};
