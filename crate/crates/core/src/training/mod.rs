//! Captioning objectives, pre-training, prompt tuning and the schedule.

mod config;
mod losses;
mod trainer;

pub use config::{lr_schedule, Decay, Phase, TrainConfig, Trainable};
pub use losses::{
    apply_gradients, autoprolm_loss, batch_caption_loss, clip_gradients, encode_records, lm_loss,
    mean_caption_loss, pretrain_losses, pretrain_step, prolm_loss, style_prolm_loss, Example, PretrainLosses,
    PretrainVars,
};
pub use trainer::{set_trainable, train, train_with, EpochStats, Progress, StepRecord, TrainReport};

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{build_corpus, vocabulary_for, CorpusConfig, SceneParams, Style};
    use crate::model::{is_prompt_param, Model, ModelConfig, PromptMode};
    use crate::numerics::{finite_diff_check, AdamW, AdamWConfig, Tape};

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            prompt_len: 4,
            d_proj: 8,
            ..ModelConfig::new(vocab, SceneParams::default().feature_width())
        }
    }

    fn small_corpus() -> crate::corpus::Corpus {
        build_corpus(&CorpusConfig {
            coco: 6,
            textcap: 4,
            short: 3,
            medium: 3,
            long: 3,
            positive: 2,
            negative: 2,
            eval_scenes: 2,
            eval_refs: 1,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_manual_prompt_reduces_to_plain_loss() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let m = Model::new(tiny(vocab.len()), 0).unwrap();
        for r in &c.train {
            let ids = vocab.encode_tokens(&r.caption);
            let mut tape = Tape::new();
            let a = lm_loss(&m, &mut tape, &r.features, &ids).unwrap();
            let b = prolm_loss(&m, &mut tape, &[], &r.features, &ids).unwrap();
            assert_eq!(tape.value(a).item(), tape.value(b).item());
        }
        let mut tape = Tape::new();
        assert!(lm_loss(&m, &mut tape, &c.train[0].features, &[]).is_err());
    }

    #[test]
    fn learned_prompt_gradient_is_isolated() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let m = Model::new(tiny(vocab.len()), 1).unwrap();
        let r = &c.train[0];
        let ids = vocab.encode_tokens(&r.caption);
        for i in 0..m.config().n_styles {
            let mut tape = Tape::new();
            let l = autoprolm_loss(&m, &mut tape, i, &r.features, &ids).unwrap();
            let grads = tape.backward(l).unwrap().into_param_grads(&tape);
            let bank: Vec<_> = grads.iter().filter(|(id, _)| is_prompt_param(m.params().name(*id))).collect();
            assert_eq!(bank.len(), 1);
            assert_eq!(bank[0].0, m.prompt_id(i).unwrap());
            assert!(bank[0].1.iter().any(|&g| g != 0.0));
        }
        let mut tape = Tape::new();
        assert!(autoprolm_loss(&m, &mut tape, 9, &r.features, &ids).is_err());
    }

    #[test]
    fn prompt_coordinates_pass_gradcheck() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let m = Model::new(tiny(vocab.len()), 2).unwrap();
        let r = &c.train[1];
        let ids = vocab.encode_tokens(&r.caption);
        let pid = m.prompt_id(r.style.index()).unwrap();
        let point = m.params().get(pid).detached();
        let err = finite_diff_check(
            |tape: &mut Tape<'_>, p| {
                tape.bind_param(pid, p);
                autoprolm_loss(&m, tape, r.style.index(), &r.features, &ids)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn pretrain_total_is_the_sum() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len()), 3).unwrap();
        let ex = encode_records(&c.train[..4], &vocab, PromptMode::None).unwrap();
        let pairs: Vec<_> = ex.iter().map(|e| (&e.features, e.caption.as_slice())).collect();
        let mut opt = AdamW::new(AdamWConfig::default(), m.params());
        let l = pretrain_step(&mut m, &mut opt, &pairs, 1, 1e-3, 1.0).unwrap();
        assert!((l.total - (l.lm + l.contrastive + l.matching)).abs() < 1e-9);
        assert!(pretrain_step(&mut m, &mut opt, &pairs[..1], 1, 1e-3, 1.0).is_err());
    }

    #[test]
    fn prompts_only_keeps_the_base_model() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len()), 4).unwrap();
        let base = |m: &Model| m.params().checksum(|n| !is_prompt_param(n));
        let bank = |m: &Model| m.params().checksum(is_prompt_param);
        let (b0, p0) = (base(&m), bank(&m));
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::finetune(PromptMode::MultiAuto, Trainable::PromptsOnly)
        };
        train(&mut m, &c.train, &vocab, &cfg).unwrap();
        assert_eq!(base(&m), b0);
        assert_ne!(bank(&m), p0);
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len()), 5).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::finetune(PromptMode::MultiAuto, Trainable::All)
        };
        let r = train(&mut m, &c.train, &vocab, &cfg).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn training_is_deterministic() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::pretrain()
        };
        let run = || {
            let mut m = Model::new(tiny(vocab.len()), 6).unwrap();
            let r = train(&mut m, &c.train, &vocab, &cfg).unwrap();
            (r.trace, m)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(a.len(), 2 * 6);
    }

    #[test]
    fn vocabulary_mismatch_fails_before_training() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len() + 1), 7).unwrap();
        let before = m.clone();
        let cfg = TrainConfig::finetune(PromptMode::MultiAuto, Trainable::All);
        assert!(train(&mut m, &c.train, &vocab, &cfg).is_err());
        assert_eq!(m, before);

        let partial = vocabulary_for(&c.train[..1]).unwrap();
        let mut m = Model::new(tiny(partial.len()), 7).unwrap();
        assert!(matches!(
            train(&mut m, &c.train, &partial, &cfg),
            Err(crate::error::Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn memorizes_a_single_pair() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len()), 8).unwrap();
        let r = &c.train[0];
        let ids = vocab.encode_tokens(&r.caption);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, m.params());
        let mut last = f64::INFINITY;
        for _ in 0..300 {
            let (loss, grads) = {
                let mut tape = Tape::new();
                let l = lm_loss(&m, &mut tape, &r.features, &ids).unwrap();
                (tape.value(l).item(), tape.backward(l).unwrap().into_param_grads(&tape))
            };
            last = loss;
            if loss < 0.01 {
                break;
            }
            apply_gradients(&mut m, &mut opt, grads, 1e-2, 0.0).unwrap();
        }
        assert!(last < 0.01, "loss {last}");
    }

    #[test]
    fn shuffled_caption_changes_the_loss() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let m = Model::new(tiny(vocab.len()), 9).unwrap();
        let r = c.train.iter().find(|r| r.style == Style::Long).unwrap();
        let ids = vocab.encode_tokens(&r.caption);
        let mut shuffled = ids.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        while shuffled == ids {
            let (i, j) = (rng.gen_range(0..ids.len()), rng.gen_range(0..ids.len()));
            shuffled.swap(i, j);
        }
        let mut tape = Tape::no_grad();
        let a = lm_loss(&m, &mut tape, &r.features, &ids).unwrap();
        let b = lm_loss(&m, &mut tape, &r.features, &shuffled).unwrap();
        assert_ne!(tape.value(a).item(), tape.value(b).item());
    }

    #[test]
    fn report_serializes() {
        let c = small_corpus();
        let vocab = c.vocabulary().unwrap();
        let mut m = Model::new(tiny(vocab.len()), 10).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::finetune(PromptMode::MultiManual, Trainable::All)
        };
        let r = train(&mut m, &c.train, &vocab, &cfg).unwrap();
        assert_eq!(r.epochs.len(), 2);
        let text = r.to_text();
        assert!(text.contains("prompt_mode=multi-manual"));
        assert!(text.contains("epoch.1.total="));
        assert_eq!(r.trace_csv().lines().count(), 1 + r.trace.len());
    }
}
