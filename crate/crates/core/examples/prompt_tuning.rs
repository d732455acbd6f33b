//! Pre-trains a small model, tunes one learned prompt per style and
//! captions a held-out scene in every style.

use promptcap::corpus::{build_corpus, CorpusConfig, Style};
use promptcap::inference::{Captioner, DecodeConfig};
use promptcap::model::{Model, ModelConfig, PromptMode};
use promptcap::training::{train, TrainConfig, Trainable};

fn main() -> promptcap::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default().scaled(0.1))?;
    let vocab = corpus.vocabulary()?;
    let config = ModelConfig {
        d_model: 32,
        d_ff: 128,
        prompt_len: 8,
        ..ModelConfig::new(vocab.len(), corpus.train[0].features.cols())
    };
    let mut model = Model::new(config, 1)?;
    println!("{} parameters", model.params().num_scalars());

    let pre = TrainConfig {
        epochs: 15,
        batch_size: 8,
        ..TrainConfig::pretrain()
    };
    let r = train(&mut model, &corpus.train, &vocab, &pre)?;
    println!("pretrain loss {:.3}", r.final_loss().unwrap());

    let ft = TrainConfig {
        epochs: 20,
        batch_size: 8,
        ..TrainConfig::finetune(PromptMode::MultiAuto, Trainable::All)
    };
    let r = train(&mut model, &corpus.train, &vocab, &ft)?;
    println!("finetune loss {:.3}", r.final_loss().unwrap());

    let scene = &corpus.eval[0];
    let cap = Captioner::new(&model, &vocab, PromptMode::MultiAuto);
    for style in Style::ALL {
        let words = cap.caption_words(&scene.features, style, &DecodeConfig::default())?;
        println!("{:>9}  {}", style.tag(), words.join(" "));
    }
    Ok(())
}
