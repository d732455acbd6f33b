//! A reduced prompt ablation: frozen rows against jointly trained ones.

use promptcap::cli::ablate::{ablation_table, run_ablation, AblationConfig, Setting};
use promptcap::corpus::{build_corpus, CorpusConfig};
use promptcap::inference::DecodeConfig;
use promptcap::model::{Model, ModelConfig, PromptMode};
use promptcap::training::{train, TrainConfig, Trainable};

fn main() -> promptcap::Result<()> {
    let corpus = build_corpus(&CorpusConfig {
        eval_scenes: 20,
        eval_refs: 2,
        ..CorpusConfig::default().scaled(0.05)
    })?;
    let vocab = corpus.vocabulary()?;
    let config = ModelConfig {
        d_model: 32,
        d_ff: 64,
        prompt_len: 4,
        ..ModelConfig::new(vocab.len(), corpus.train[0].features.cols())
    };
    let mut model = Model::new(config, 2)?;
    let pre = TrainConfig {
        epochs: 2,
        ..TrainConfig::pretrain()
    };
    train(&mut model, &corpus.train, &vocab, &pre)?;

    let cfg = AblationConfig {
        finetune: TrainConfig {
            epochs: 2,
            ..TrainConfig::finetune(PromptMode::None, Trainable::All)
        },
        decode: DecodeConfig {
            max_len: Some(20),
            ..DecodeConfig::greedy()
        },
        styles: None,
    };
    let settings = [Setting::FrozenNone, Setting::FrozenLearned, Setting::JointShared, Setting::JointAuto];
    let rows = run_ablation(&model, &vocab, &corpus, &settings, &cfg, &mut |m| eprintln!("{m}"))?;
    print!("{}", ablation_table(&rows));
    Ok(())
}
