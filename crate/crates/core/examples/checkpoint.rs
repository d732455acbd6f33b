//! Saves a model to a checkpoint, loads it back and compares captions.

use promptcap::cli::{round_to_storage, Checkpoint};
use promptcap::corpus::{build_corpus, CorpusConfig, Style};
use promptcap::inference::{Captioner, DecodeConfig};
use promptcap::model::{Model, ModelConfig, PromptMode};

fn main() -> promptcap::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default().scaled(0.01))?;
    let vocab = corpus.vocabulary()?;
    let mut model = Model::new(ModelConfig::new(vocab.len(), corpus.train[0].features.cols()), 3)?;
    round_to_storage(&mut model);
    let ck = Checkpoint::new(model, vocab, PromptMode::MultiAuto)?;

    let path = std::env::temp_dir().join("promptcap-example.ckpt");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    println!("{} bytes written to {}", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), path.display());

    let cfg = DecodeConfig { max_len: Some(6), ..DecodeConfig::greedy() };
    let scene = &corpus.eval[0].features;
    let before = Captioner::new(&ck.model, &ck.vocab, ck.prompt_mode).caption_words(scene, Style::Short, &cfg)?;
    let after = Captioner::new(&back.model, &back.vocab, back.prompt_mode).caption_words(scene, Style::Short, &cfg)?;
    println!("before: {}\nafter:  {}\nidentical: {}", before.join(" "), after.join(" "), before == after);

    let mut bytes = ck.to_bytes();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    println!("corrupted load: {}", Checkpoint::from_bytes(&bytes).unwrap_err());
    Ok(())
}
