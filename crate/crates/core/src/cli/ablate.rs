//! The prompt ablation matrix and the prompt-length sweep.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::cli::eval::{evaluate_split, Route};
use crate::corpus::{CaptionRecord, Corpus, Domain, Style};
use crate::error::{Error, Result};
use crate::inference::DecodeConfig;
use crate::metrics::EvalReport;
use crate::model::{Model, PromptMode};
use crate::tokenizer::Vocabulary;
use crate::training::{train_with, Progress, TrainConfig, Trainable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    FrozenNone,
    FrozenManual,
    FrozenLearned,
    IndividualNone,
    IndividualManual,
    IndividualLearned,
    JointNone,
    JointShared,
    JointMulti,
    JointAuto,
}

/// How a setting obtains its model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// The pre-trained model as is, or with only its prompts trained.
    Frozen,
    /// One model per domain.
    Individual,
    /// One model on the whole mixture.
    Joint,
}

impl Setting {
    pub const ALL: [Setting; 10] = [
        Setting::FrozenNone,
        Setting::FrozenManual,
        Setting::FrozenLearned,
        Setting::IndividualNone,
        Setting::IndividualManual,
        Setting::IndividualLearned,
        Setting::JointNone,
        Setting::JointShared,
        Setting::JointMulti,
        Setting::JointAuto,
    ];

    /// Row number in the ablation table; 7 is not used.
    pub fn number(self) -> u8 {
        match self {
            Setting::FrozenNone => 1,
            Setting::FrozenManual => 2,
            Setting::FrozenLearned => 3,
            Setting::IndividualNone => 4,
            Setting::IndividualManual => 5,
            Setting::IndividualLearned => 6,
            Setting::JointNone => 8,
            Setting::JointShared => 9,
            Setting::JointMulti => 10,
            Setting::JointAuto => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::FrozenNone => "frozen-none",
            Setting::FrozenManual => "frozen-manual",
            Setting::FrozenLearned => "frozen-learned",
            Setting::IndividualNone => "individual-none",
            Setting::IndividualManual => "individual-manual",
            Setting::IndividualLearned => "individual-learned",
            Setting::JointNone => "joint-none",
            Setting::JointShared => "joint-shared-manual",
            Setting::JointMulti => "joint-multi-manual",
            Setting::JointAuto => "joint-multi-auto",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Setting::FrozenNone | Setting::FrozenManual | Setting::FrozenLearned => Regime::Frozen,
            Setting::IndividualNone | Setting::IndividualManual | Setting::IndividualLearned => Regime::Individual,
            _ => Regime::Joint,
        }
    }

    pub fn prompt_mode(self) -> PromptMode {
        match self {
            Setting::FrozenNone | Setting::IndividualNone | Setting::JointNone => PromptMode::None,
            Setting::FrozenManual | Setting::IndividualManual | Setting::JointShared => PromptMode::SharedManual,
            Setting::JointMulti => PromptMode::MultiManual,
            Setting::FrozenLearned | Setting::IndividualLearned | Setting::JointAuto => PromptMode::MultiAuto,
        }
    }

    /// Training run for this setting, or `None` when the model is used untouched.
    pub fn train_config(self, base: &TrainConfig) -> Option<TrainConfig> {
        let trainable = match (self.regime(), self.prompt_mode()) {
            (Regime::Frozen, PromptMode::MultiAuto) => Trainable::PromptsOnly,
            (Regime::Frozen, _) => return None,
            _ => Trainable::All,
        };
        Some(TrainConfig {
            prompt_mode: self.prompt_mode(),
            trainable,
            ..*base
        })
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    /// Accepts the row number or the name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Setting::ALL
            .into_iter()
            .find(|x| x.name() == s || x.number().to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown ablation setting `{s}`; expected 1-6, 8-11 or one of {}",
                    Setting::ALL.map(Setting::name).join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    /// Fine-tuning budget; prompt mode and trainable set are set per row.
    pub finetune: TrainConfig,
    pub decode: DecodeConfig,
    /// Styles to decode on the held-out split; `None` for all.
    pub styles: Option<Vec<Style>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub setting: Setting,
    pub report: EvalReport,
}

fn records_of(records: &[CaptionRecord], domain: Domain) -> Vec<CaptionRecord> {
    records.iter().filter(|r| r.domain == domain).cloned().collect()
}

fn fit(
    base: &Model,
    records: &[CaptionRecord],
    vocab: &Vocabulary,
    config: &TrainConfig,
    log: &mut dyn FnMut(&str),
    what: &str,
) -> Result<Model> {
    let mut m = base.clone();
    train_with(&mut m, records, vocab, config, &mut |p| {
        if let Progress::Epoch(e, s) = p {
            log(&format!("{what}: epoch {} loss {:.4}", e + 1, s.total));
        }
    })?;
    Ok(m)
}

/// Trains and evaluates one row starting from `pretrained`.
pub fn run_setting(
    setting: Setting,
    pretrained: &Model,
    vocab: &Vocabulary,
    corpus: &Corpus,
    config: &AblationConfig,
    log: &mut dyn FnMut(&str),
) -> Result<AblationRow> {
    let mode = setting.prompt_mode();
    let styles = config.styles.as_deref();
    let eval = |route: &Route<'_>| evaluate_split(route, vocab, &corpus.eval, styles, &config.decode, true).map(|(r, _)| r);
    let report = match (setting.regime(), setting.train_config(&config.finetune)) {
        (_, None) => eval(&|_| (pretrained, mode))?,
        (Regime::Individual, Some(tc)) => {
            let factual = fit(pretrained, &records_of(&corpus.train, Domain::Factual), vocab, &tc, log, setting.name())?;
            let textual = fit(pretrained, &records_of(&corpus.train, Domain::Textual), vocab, &tc, log, setting.name())?;
            eval(&|s: Style| match s.domain() {
                Domain::Factual => (&factual, mode),
                Domain::Textual => (&textual, mode),
            })?
        }
        (_, Some(tc)) => {
            let m = fit(pretrained, &corpus.train, vocab, &tc, log, setting.name())?;
            eval(&|_| (&m, mode))?
        }
    };
    log(&format!("{}: {}", setting.name(), report.summary()));
    Ok(AblationRow { setting, report })
}

pub fn run_ablation(
    pretrained: &Model,
    vocab: &Vocabulary,
    corpus: &Corpus,
    settings: &[Setting],
    config: &AblationConfig,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<AblationRow>> {
    settings
        .iter()
        .map(|&s| run_setting(s, pretrained, vocab, corpus, config, log))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// CSV table, one line per row.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("row,setting,loss,bleu4,cider,compliance\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.4},{:.4},{}",
            r.setting.number(),
            r.setting.name(),
            fmt_opt(r.report.loss),
            r.report.bleu4,
            r.report.cider,
            fmt_opt(r.report.compliance.mean_rate()),
        )
        .unwrap();
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub prompt_len: usize,
    pub report: EvalReport,
}

/// Multi-auto fine-tuning with freshly drawn prompts of each length.
pub fn prompt_length_sweep(
    pretrained: &Model,
    vocab: &Vocabulary,
    corpus: &Corpus,
    lengths: &[usize],
    config: &AblationConfig,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<SweepRow>> {
    let tc = Setting::JointAuto.train_config(&config.finetune).expect("joint rows train");
    lengths
        .iter()
        .map(|&n| {
            let mut start = pretrained.clone();
            start.reset_prompt_bank(n, config.finetune.seed)?;
            let m = fit(&start, &corpus.train, vocab, &tc, log, &format!("N={n}"))?;
            let (report, _) = evaluate_split(
                &|_| (&m, PromptMode::MultiAuto),
                vocab,
                &corpus.eval,
                config.styles.as_deref(),
                &config.decode,
                true,
            )?;
            log(&format!("N={n}: {}", report.summary()));
            Ok(SweepRow { prompt_len: n, report })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("prompt_len,loss,bleu4,cider,compliance\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{:.4},{:.4},{}",
            r.prompt_len,
            fmt_opt(r.report.loss),
            r.report.bleu4,
            r.report.cider,
            fmt_opt(r.report.compliance.mean_rate()),
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_parse_by_number_and_name() {
        for s in Setting::ALL {
            assert_eq!(s.number().to_string().parse::<Setting>().unwrap(), s);
            assert_eq!(s.name().parse::<Setting>().unwrap(), s);
        }
        let e = "7".parse::<Setting>().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn row_plans() {
        let base = TrainConfig::finetune(PromptMode::None, Trainable::All);
        assert!(Setting::FrozenNone.train_config(&base).is_none());
        assert!(Setting::FrozenManual.train_config(&base).is_none());
        let fl = Setting::FrozenLearned.train_config(&base).unwrap();
        assert_eq!((fl.prompt_mode, fl.trainable), (PromptMode::MultiAuto, Trainable::PromptsOnly));
        for s in Setting::ALL {
            if let Some(tc) = s.train_config(&base) {
                tc.validate().unwrap();
                assert_eq!(tc.prompt_mode, s.prompt_mode());
            }
        }
        assert_eq!(Setting::JointShared.prompt_mode(), PromptMode::SharedManual);
        assert_eq!(Setting::JointAuto.number(), 11);
    }
}
