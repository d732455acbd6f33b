//! Maps each learned prompt row to its nearest vocabulary word.

use promptcap::corpus::{build_corpus, CorpusConfig, Style};
use promptcap::model::{nearest_vocab, Model, ModelConfig, PromptMode};
use promptcap::training::{train, TrainConfig, Trainable};

fn main() -> promptcap::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default().scaled(0.05))?;
    let vocab = corpus.vocabulary()?;
    let config = ModelConfig {
        d_model: 32,
        d_ff: 64,
        prompt_len: 4,
        ..ModelConfig::new(vocab.len(), corpus.train[0].features.cols())
    };
    let mut model = Model::new(config, 5)?;
    let ft = TrainConfig {
        epochs: 2,
        ..TrainConfig::finetune(PromptMode::MultiAuto, Trainable::All)
    };
    train(&mut model, &corpus.train, &vocab, &ft)?;

    let table = model.params().get(model.token_embedding_id());
    for style in Style::ALL {
        let prompt = model.params().get(model.prompt_id(style.index())?);
        let words: Vec<&str> = nearest_vocab(prompt, table)?
            .into_iter()
            .map(|i| vocab.token(i).unwrap_or("?"))
            .collect();
        println!("{:>9}  {}", style.tag(), words.join(" "));
    }
    Ok(())
}
