use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::style::{length_bucket, Domain, LengthBucket, Style};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One (scene, style, caption) training or reference example.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionRecord {
    pub scene_id: u64,
    pub domain: Domain,
    pub style: Style,
    pub caption: Vec<String>,
    pub features: Tensor,
    pub embedded_text: Option<Vec<String>>,
}

impl CaptionRecord {
    pub fn length_bucket(&self) -> LengthBucket {
        length_bucket(self.caption.len())
    }
}

/// Per-style record counts of a mixed corpus and the seed that ordered it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixtureManifest {
    pub counts: BTreeMap<Style, usize>,
    pub seed: u64,
    pub eval_records: usize,
}

impl MixtureManifest {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, style: Style) -> usize {
        self.counts.get(&style).copied().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "total={}", self.total()).unwrap();
        for style in Style::ALL {
            writeln!(s, "{}={}", style.tag(), self.count(style)).unwrap();
        }
        writeln!(s, "eval_records={}", self.eval_records).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let mut seed = None;
        let mut total = None;
        let mut eval_records = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::CorpusFormat {
                line: i + 1,
                msg: msg.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let n: u64 = v.trim().parse().map_err(|_| bad("expected an integer"))?;
            match k.trim() {
                "seed" => seed = Some(n),
                "total" => total = Some(n as usize),
                "eval_records" => eval_records = n as usize,
                tag => {
                    let style: Style = tag.parse().map_err(|_| bad("unknown manifest key"))?;
                    counts.insert(style, n as usize);
                }
            }
        }
        let m = MixtureManifest {
            counts,
            seed: seed.ok_or(Error::CorpusFormat { line: 0, msg: "missing seed".into() })?,
            eval_records,
        };
        if total != Some(m.total()) {
            return Err(Error::CorpusFormat {
                line: 0,
                msg: "total does not match per-style counts".into(),
            });
        }
        Ok(m)
    }
}

/// Mixes per-style record lists into one shuffled training set.
///
/// Every style except the emotional ones must contribute records.
pub fn build_mixture(
    lists: Vec<(Style, Vec<CaptionRecord>)>,
    seed: u64,
) -> Result<(Vec<CaptionRecord>, MixtureManifest)> {
    let mut counts = BTreeMap::new();
    let mut all = Vec::new();
    for (style, records) in lists {
        if records.is_empty() && !matches!(style, Style::Positive | Style::Negative) {
            return Err(Error::InvalidArgument(format!("style `{style}` has no records")));
        }
        if let Some(r) = records.iter().find(|r| r.style != style) {
            return Err(Error::InvalidArgument(format!(
                "record of style `{}` in the `{style}` list",
                r.style
            )));
        }
        *counts.entry(style).or_insert(0) += records.len();
        all.extend(records);
    }
    for style in Style::ALL {
        if !counts.contains_key(&style) && !matches!(style, Style::Positive | Style::Negative) {
            return Err(Error::InvalidArgument(format!("style `{style}` has no records")));
        }
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        all,
        MixtureManifest {
            counts,
            seed,
            eval_records: 0,
        },
    ))
}
