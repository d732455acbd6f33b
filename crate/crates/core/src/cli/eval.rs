//! Decoding a held-out split and scoring it.

use std::collections::BTreeMap;

use crate::corpus::{CaptionRecord, EmotionLexicon, Style};
use crate::error::{Error, Result};
use crate::inference::{Captioner, DecodeConfig};
use crate::metrics::{evaluate, EvalItem, EvalReport};
use crate::model::{Model, PromptMode};
use crate::numerics::Tensor;
use crate::tokenizer::{Vocabulary, UNK};
use crate::training::{encode_records, mean_caption_loss};

/// The references of one (scene, style) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGroup {
    pub scene_id: u64,
    pub style: Style,
    pub features: Tensor,
    pub references: Vec<Vec<String>>,
    pub embedded_text: Option<Vec<String>>,
}

/// Groups records by (scene, style), ordered by scene id then style.
pub fn group_references(records: &[CaptionRecord], styles: Option<&[Style]>) -> Vec<EvalGroup> {
    let mut groups: BTreeMap<(u64, Style), EvalGroup> = BTreeMap::new();
    for r in records {
        if styles.is_some_and(|s| !s.contains(&r.style)) {
            continue;
        }
        groups
            .entry((r.scene_id, r.style))
            .or_insert_with(|| EvalGroup {
                scene_id: r.scene_id,
                style: r.style,
                features: r.features.clone(),
                references: Vec::new(),
                embedded_text: r.embedded_text.clone(),
            })
            .references
            .push(r.caption.clone());
    }
    groups.into_values().collect()
}

/// Picks the model and prompt mode that serve a style.
pub type Route<'m> = dyn Fn(Style) -> (&'m Model, PromptMode) + 'm;

/// Decodes every group with the model its style routes to.
pub fn decode_groups(route: &Route<'_>, vocab: &Vocabulary, groups: &[EvalGroup], decode: &DecodeConfig) -> Result<Vec<EvalItem>> {
    groups
        .iter()
        .map(|g| {
            let (model, mode) = route(g.style);
            let cap = Captioner::new(model, vocab, mode);
            Ok(EvalItem {
                scene_id: g.scene_id,
                style: g.style,
                candidate: cap.caption_words(&g.features, g.style, decode)?,
                references: g.references.clone(),
                embedded_text: g.embedded_text.clone(),
            })
        })
        .collect()
}

/// Scores the first reference of each group as if it were the decode.
pub fn ground_truth_items(groups: &[EvalGroup]) -> Vec<EvalItem> {
    groups
        .iter()
        .map(|g| EvalItem {
            scene_id: g.scene_id,
            style: g.style,
            candidate: g.references[0].clone(),
            references: g.references.clone(),
            embedded_text: g.embedded_text.clone(),
        })
        .collect()
}

/// Mean caption loss over the records whose words are all in the vocabulary.
pub fn split_loss(route: &Route<'_>, vocab: &Vocabulary, records: &[CaptionRecord]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for style in Style::ALL {
        let subset: Vec<CaptionRecord> = records
            .iter()
            .filter(|r| r.style == style && !vocab.encode_tokens(&r.caption).contains(&UNK))
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        let (model, mode) = route(style);
        let examples = encode_records(&subset, vocab, mode)?;
        sum += mean_caption_loss(model, &examples)? * examples.len() as f64;
        n += examples.len();
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(sum / n as f64)
}

/// Decodes and scores a split; the caption loss is added when `with_loss`.
pub fn evaluate_split(
    route: &Route<'_>,
    vocab: &Vocabulary,
    records: &[CaptionRecord],
    styles: Option<&[Style]>,
    decode: &DecodeConfig,
    with_loss: bool,
) -> Result<(EvalReport, Vec<EvalItem>)> {
    let groups = group_references(records, styles);
    if groups.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let items = decode_groups(route, vocab, &groups, decode)?;
    let mut report = evaluate(&items, &EmotionLexicon::default())?;
    if with_loss {
        let kept: Vec<CaptionRecord> = records
            .iter()
            .filter(|r| styles.is_none_or(|s| s.contains(&r.style)))
            .cloned()
            .collect();
        report.loss = Some(split_loss(route, vocab, &kept)?);
    }
    Ok((report, items))
}
