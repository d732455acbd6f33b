//! Corpus BLEU-4, CIDEr-D and style-compliance scoring.

mod bleu;
mod cider;
mod compliance;
mod ngram;

use std::fmt::Write as _;

pub use bleu::{bleu4, brevity_penalty, BleuCounts};
pub use cider::{cider, CiderScores, CIDER_SIGMA};
pub use compliance::{contains_run, judge, style_compliance, ComplianceReport, StyleTally};
pub use ngram::{DocumentFrequency, NGram, NGramStats, MAX_N};

use crate::corpus::{EmotionLexicon, Style};
use crate::error::{Error, Result};

/// One decoded caption and what it is scored against.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub scene_id: u64,
    pub style: Style,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
    pub embedded_text: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub bleu4: f64,
    pub cider: f64,
    pub item_cider: Vec<f64>,
    pub compliance: ComplianceReport,
    /// Mean caption loss on the same split, when it was measured.
    pub loss: Option<f64>,
}

pub fn evaluate(items: &[EvalItem], lexicon: &EmotionLexicon) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let cands: Vec<Vec<String>> = items.iter().map(|i| i.candidate.clone()).collect();
    let refs: Vec<Vec<Vec<String>>> = items.iter().map(|i| i.references.clone()).collect();
    let bleu = bleu4(&cands, &refs)?;
    let cid = cider(&cands, &refs)?;
    let compliance = style_compliance(
        items
            .iter()
            .map(|i| (i.style, i.candidate.as_slice(), i.embedded_text.as_deref())),
        lexicon,
    );
    Ok(EvalReport {
        samples: items.len(),
        bleu4: bleu,
        cider: cid.corpus,
        item_cider: cid.items,
        compliance,
        loss: None,
    })
}

impl EvalReport {
    /// Plain `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("samples", self.samples.to_string());
        kv("bleu4", format!("{:.6}", self.bleu4));
        kv("cider", format!("{:.6}", self.cider));
        if let Some(l) = self.loss {
            kv("loss", format!("{l:.6}"));
        }
        if let Some(m) = self.compliance.mean_rate() {
            kv("compliance.mean", format!("{m:.6}"));
        }
        for (style, t) in &self.compliance.styles {
            let tag = style.tag();
            kv(&format!("count.{tag}"), t.total.to_string());
            if let Some(r) = t.rate() {
                kv(&format!("compliance.{tag}"), format!("{r:.6}"));
            }
            if matches!(style, Style::Positive | Style::Negative) {
                if let Some(r) = t.contamination_rate() {
                    kv(&format!("contamination.{tag}"), format!("{r:.6}"));
                }
            }
        }
        s
    }

    /// Short one-line summary.
    pub fn summary(&self) -> String {
        let mut s = format!("bleu4={:.4} cider={:.4}", self.bleu4, self.cider);
        if let Some(m) = self.compliance.mean_rate() {
            write!(s, " compliance={m:.4}").unwrap();
        }
        s
    }

    /// Per-item CSV: scene, style, item CIDEr, verdict, candidate, references.
    pub fn items_csv(&self, items: &[EvalItem], lexicon: &EmotionLexicon) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writes go to memory; the only failure left is a record-length
        // mismatch, which the fixed columns rule out.
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["scene_id", "style", "cider", "compliant", "candidate", "references"])
            .map_err(io)?;
        for (item, score) in items.iter().zip(&self.item_cider) {
            let verdict = match judge(item.style, &item.candidate, item.embedded_text.as_deref(), lexicon) {
                Some((ok, _)) => ok.to_string(),
                None => String::new(),
            };
            let refs: Vec<String> = item.references.iter().map(|r| r.join(" ")).collect();
            w.write_record([
                item.scene_id.to_string(),
                item.style.tag().to_string(),
                format!("{score:.6}"),
                verdict,
                item.candidate.join(" "),
                refs.join(" | "),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().expect("in-memory writer");
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}
