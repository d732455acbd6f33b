use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::PromptMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Plain captions with the contrastive and matching terms added.
    Pretrain,
    /// Prompted captioning on the styled mixture.
    Finetune,
}

/// Which parameters an optimizer step may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    All,
    PromptsOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decay {
    /// Linear decay from the peak to zero at the final step.
    Linear,
    /// Peak rate held after warmup.
    Constant,
}

macro_rules! tagged {
    ($ty:ty, $what:literal, $($variant:path => $tag:literal),+) => {
        impl $ty {
            pub fn tag(self) -> &'static str {
                match self { $($variant => $tag),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().replace('_', "-").as_str() {
                    $($tag => Ok($variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", $what, " `{}`; expected one of {}"),
                        s,
                        [$($tag),+].join(", ")
                    ))),
                }
            }
        }
    };
}

tagged!(Phase, "phase", Phase::Pretrain => "pretrain", Phase::Finetune => "finetune");
tagged!(Trainable, "trainable set", Trainable::All => "all", Trainable::PromptsOnly => "prompts-only");
tagged!(Decay, "decay rule", Decay::Linear => "linear", Decay::Constant => "constant");

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub prompt_mode: PromptMode,
    pub trainable: Trainable,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub decay: Decay,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            prompt_mode: PromptMode::None,
            trainable: Trainable::All,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            warmup_steps: 50,
            decay: Decay::Linear,
            weight_decay: 0.01,
            clip_norm: 1.0,
            seed: 1,
        }
    }

    pub fn finetune(prompt_mode: PromptMode, trainable: Trainable) -> Self {
        TrainConfig {
            phase: Phase::Finetune,
            prompt_mode,
            trainable,
            epochs: 15,
            lr: 1e-3,
            warmup_steps: 20,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trainable == Trainable::PromptsOnly && self.prompt_mode != PromptMode::MultiAuto {
            return Err(Error::InvalidArgument(
                "training only the prompts requires prompt mode multi-auto".into(),
            ));
        }
        if self.phase == Phase::Pretrain && self.prompt_mode != PromptMode::None {
            return Err(Error::InvalidArgument("pre-training uses plain captions (prompt mode none)".into()));
        }
        let min_batch = if self.phase == Phase::Pretrain { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::InvalidArgument(format!("batch size must be at least {min_batch}")));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("learning rate and weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak` over `warmup` steps, then either held or
/// decayed linearly to 0 at step `total`.
pub fn lr_schedule(step: usize, total: usize, warmup: usize, peak: f64, decay: Decay) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    match decay {
        Decay::Constant => peak,
        Decay::Linear => {
            if total <= warmup {
                return peak;
            }
            let left = total.saturating_sub(step) as f64;
            peak * left / (total - warmup) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn schedule_landmarks() {
        assert_eq!(lr_schedule(0, 100, 10, 1e-3, Decay::Linear), 0.0);
        assert_eq!(lr_schedule(10, 100, 10, 1e-3, Decay::Linear), 1e-3);
        assert!((lr_schedule(55, 100, 10, 1e-3, Decay::Linear) - 5e-4).abs() < 1e-12);
        assert_eq!(lr_schedule(100, 100, 10, 1e-3, Decay::Linear), 0.0);
        assert_eq!(lr_schedule(70, 100, 10, 1e-3, Decay::Constant), 1e-3);
    }

    #[test]
    fn prompts_only_needs_learned_prompts() {
        let c = TrainConfig::finetune(PromptMode::None, Trainable::PromptsOnly);
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(TrainConfig::finetune(PromptMode::MultiAuto, Trainable::PromptsOnly).validate().is_ok());
    }

    #[test]
    fn tags_round_trip() {
        for t in [Trainable::All, Trainable::PromptsOnly] {
            assert_eq!(t.tag().parse::<Trainable>().unwrap(), t);
        }
        assert_eq!("prompts_only".parse::<Trainable>().unwrap(), Trainable::PromptsOnly);
        assert!("sometimes".parse::<Phase>().is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_bounded(step in 0usize..500, total in 1usize..400, warmup in 0usize..100) {
            let lr = lr_schedule(step, total, warmup, 2e-3, Decay::Linear);
            prop_assert!((0.0..=2e-3).contains(&lr));
        }

        #[test]
        fn decay_is_monotone(total in 20usize..400, warmup in 0usize..20, step in 0usize..400) {
            let a = lr_schedule(step.max(warmup), total, warmup, 1.0, Decay::Linear);
            let b = lr_schedule(step.max(warmup) + 1, total, warmup, 1.0, Decay::Linear);
            prop_assert!(b <= a);
        }
    }
}
