use std::collections::BTreeMap;

use crate::corpus::{length_bucket, EmotionLexicon, LengthBucket, Style};

/// Tallies for one requested style.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StyleTally {
    /// Decodes requested in this style.
    pub total: usize,
    /// Decodes the style's rule could judge.
    pub scored: usize,
    pub compliant: usize,
    /// Positive or negative decodes that contain a word of the opposite lexicon.
    pub contaminated: usize,
}

impl StyleTally {
    pub fn rate(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.compliant as f64 / self.scored as f64)
    }

    pub fn contamination_rate(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.contaminated as f64 / self.scored as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplianceReport {
    pub styles: BTreeMap<Style, StyleTally>,
}

impl ComplianceReport {
    pub fn get(&self, style: Style) -> StyleTally {
        self.styles.get(&style).copied().unwrap_or_default()
    }

    pub fn rate(&self, style: Style) -> Option<f64> {
        self.get(style).rate()
    }

    /// Unweighted mean of the per-style rates that could be computed.
    pub fn mean_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.styles.values().filter_map(StyleTally::rate).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

/// True when `needle` occurs in `hay` as a contiguous run.
pub fn contains_run<S: AsRef<str>, T: AsRef<str>>(hay: &[S], needle: &[T]) -> bool {
    !needle.is_empty()
        && hay
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref()))
}

/// Verdict of one decode under its requested style, `None` when the style has
/// no rule (coco) or the rule cannot apply (textcap on a scene without text).
/// The second value flags lexicon cross-contamination.
pub fn judge<S: AsRef<str>>(
    style: Style,
    tokens: &[S],
    embedded_text: Option<&[String]>,
    lexicon: &EmotionLexicon,
) -> Option<(bool, bool)> {
    let (pos, neg) = lexicon.count(tokens);
    match style {
        Style::Coco => None,
        Style::Short | Style::Medium | Style::Long => {
            Some((LengthBucket::of_style(style) == Some(length_bucket(tokens.len())), false))
        }
        Style::Positive => Some((pos > 0 && neg == 0, neg > 0)),
        Style::Negative => Some((neg > 0 && pos == 0, pos > 0)),
        Style::Textcap => embedded_text.map(|t| (contains_run(tokens, t), false)),
    }
}

/// Scores decodes against the rule of the style each one was asked for.
pub fn style_compliance<'i, S, I>(decodes: I, lexicon: &EmotionLexicon) -> ComplianceReport
where
    S: AsRef<str> + 'i,
    I: IntoIterator<Item = (Style, &'i [S], Option<&'i [String]>)>,
{
    let mut report = ComplianceReport::default();
    for (style, tokens, text) in decodes {
        let t = report.styles.entry(style).or_default();
        t.total += 1;
        if let Some((ok, contaminated)) = judge(style, tokens, text, lexicon) {
            t.scored += 1;
            t.compliant += ok as usize;
            t.contaminated += contaminated as usize;
        }
    }
    report
}
