//! Procedural multi-style captioning corpus.
//!
//! Scenes stand in for images. Captions are rendered per style from
//! templates, then sorted into the training subsets by the same rules used
//! for real data: length buckets for the length styles and lexicon
//! filtering for the emotional styles.

mod format;
mod lexicon;
mod mixture;
mod render;
mod scene;
mod style;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use format::{
    decode_features, encode_features, read_records, read_scenes, record_from_line, record_to_line,
    scene_to_line, write_records, SceneInput,
};
pub use lexicon::{filter_emotional, EmotionLexicon, Sentiment, NEGATIVE_WORDS, POSITIVE_WORDS};
pub use mixture::{build_mixture, CaptionRecord, MixtureManifest};
pub use render::{render_caption, BACKGROUNDS};
pub use scene::{
    derive_seed, generate_scene, Scene, SceneObject, SceneParams, SceneRelation, ATTRIBUTES, OBJECT_CLASSES,
    RELATIONS, TEXT_WORDS,
};
pub use style::{length_bucket, Domain, LengthBucket, Style, SHARED_PROMPT};

use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Offset separating held-out scene ids from training scene ids.
const EVAL_ID_BASE: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub scene: SceneParams,
    pub coco: usize,
    pub textcap: usize,
    pub short: usize,
    pub medium: usize,
    pub long: usize,
    pub positive: usize,
    pub negative: usize,
    pub eval_scenes: usize,
    pub eval_refs: usize,
    pub eval_text_probability: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 7,
            scene: SceneParams::default(),
            coco: 1000,
            textcap: 1000,
            short: 400,
            medium: 400,
            long: 400,
            positive: 40,
            negative: 40,
            eval_scenes: 200,
            eval_refs: 5,
            eval_text_probability: 0.5,
        }
    }
}

impl CorpusConfig {
    /// A proportionally smaller corpus, keeping at least one record per style.
    pub fn scaled(&self, factor: f64) -> CorpusConfig {
        let s = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        CorpusConfig {
            coco: s(self.coco),
            textcap: s(self.textcap),
            short: s(self.short),
            medium: s(self.medium),
            long: s(self.long),
            positive: s(self.positive),
            negative: s(self.negative),
            ..self.clone()
        }
    }
}

/// A generated corpus: the shuffled training mixture and the multi-reference
/// held-out split.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<CaptionRecord>,
    pub eval: Vec<CaptionRecord>,
    pub manifest: MixtureManifest,
}

fn record(scene: &Scene, style: Style, caption: Vec<String>) -> CaptionRecord {
    CaptionRecord {
        scene_id: scene.id,
        domain: style.domain(),
        style,
        caption,
        features: scene.features.clone(),
        embedded_text: scene.text_tokens(),
    }
}

struct Generator<'a> {
    config: &'a CorpusConfig,
    next_id: u64,
}

impl Generator<'_> {
    fn scene(&mut self, text: Option<bool>) -> Result<Scene> {
        let id = self.next_id;
        self.next_id += 1;
        generate_scene(id, derive_seed(self.config.seed, id), &self.config.scene, text)
    }

    fn caption(&self, scene: &Scene, style: Style, variant: u64) -> Result<Vec<String>> {
        let seed = derive_seed(self.config.seed ^ 0x5eed_cafe, scene.id.wrapping_mul(31).wrapping_add(variant));
        render_caption(scene, style, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Generates the full corpus described by `config`.
pub fn build_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.scene.validate()?;
    let mut g = Generator { config, next_id: 0 };

    let mut coco = Vec::with_capacity(config.coco);
    for _ in 0..config.coco {
        let s = g.scene(None)?;
        coco.push(record(&s, Style::Coco, g.caption(&s, Style::Coco, 0)?));
    }
    let mut textcap = Vec::with_capacity(config.textcap);
    for _ in 0..config.textcap {
        let s = g.scene(Some(true))?;
        textcap.push(record(&s, Style::Textcap, g.caption(&s, Style::Textcap, 0)?));
    }

    // Length subsets: render a pool of factual descriptions with every
    // template, then split it by caption length.
    let mut by_length: [Vec<CaptionRecord>; 3] = Default::default();
    let quotas = [config.short, config.medium, config.long];
    let templates = [Style::Short, Style::Medium, Style::Long];
    for (template, &quota) in templates.iter().zip(&quotas) {
        for _ in 0..quota {
            let s = g.scene(None)?;
            let caption = g.caption(&s, *template, 0)?;
            let style = length_bucket(caption.len()).style();
            by_length[style.index() - Style::Short.index()].push(record(&s, style, caption));
        }
    }

    // Emotional subsets: lexicon filtering over emotionally rendered captions.
    let mut emotional = Vec::new();
    for (style, n) in [(Style::Positive, config.positive), (Style::Negative, config.negative)] {
        for _ in 0..n {
            let s = g.scene(None)?;
            emotional.push(record(&s, style, g.caption(&s, style, 0)?));
        }
    }
    let lexicon = EmotionLexicon::default();
    let (mut positive, mut negative) = filter_emotional(emotional, &lexicon, |r| r.caption.as_slice());
    positive.iter_mut().for_each(|r| r.style = Style::Positive);
    negative.iter_mut().for_each(|r| r.style = Style::Negative);

    let [short, medium, long] = by_length;
    let (train, mut manifest) = build_mixture(
        vec![
            (Style::Coco, coco),
            (Style::Textcap, textcap),
            (Style::Short, short),
            (Style::Medium, medium),
            (Style::Long, long),
            (Style::Positive, positive),
            (Style::Negative, negative),
        ],
        config.seed,
    )?;

    let eval_params = SceneParams {
        text_probability: config.eval_text_probability,
        ..config.scene.clone()
    };
    let mut eval = Vec::new();
    for i in 0..config.eval_scenes as u64 {
        let id = EVAL_ID_BASE + i;
        let s = generate_scene(id, derive_seed(config.seed, id), &eval_params, None)?;
        for style in Style::ALL {
            if style == Style::Textcap && s.embedded_text.is_none() {
                continue;
            }
            for v in 0..config.eval_refs.max(1) as u64 {
                eval.push(record(&s, style, g.caption(&s, style, v)?));
            }
        }
    }
    manifest.eval_records = eval.len();
    Ok(Corpus { train, eval, manifest })
}

impl Corpus {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_records(&dir.join(TRAIN_FILE), &self.train)?;
        write_records(&dir.join(EVAL_FILE), &self.eval)?;
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, self.manifest.to_text()).map_err(|e| Error::io(mpath, e))
    }

    /// Loads a corpus directory and checks it against its manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest = MixtureManifest::parse(&text)?;
        let train = read_records(&dir.join(TRAIN_FILE))?;
        let eval_path = dir.join(EVAL_FILE);
        let eval = if eval_path.exists() { read_records(&eval_path)? } else { Vec::new() };
        let corpus = Corpus { train, eval, manifest };
        corpus.check_manifest()?;
        Ok(corpus)
    }

    pub fn check_manifest(&self) -> Result<()> {
        for style in Style::ALL {
            let n = self.train.iter().filter(|r| r.style == style).count();
            if n != self.manifest.count(style) {
                return Err(Error::CorpusFormat {
                    line: 0,
                    msg: format!("manifest lists {} `{style}` records, file has {n}", self.manifest.count(style)),
                });
            }
        }
        if self.eval.len() != self.manifest.eval_records {
            return Err(Error::CorpusFormat {
                line: 0,
                msg: "eval record count does not match the manifest".into(),
            });
        }
        Ok(())
    }

    /// Every caption text, for vocabulary construction.
    pub fn caption_texts(&self) -> Vec<String> {
        self.train.iter().chain(&self.eval).map(|r| r.caption.join(" ")).collect()
    }

    /// Vocabulary over every caption and every hand-written prompt.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        vocabulary_for(self.train.iter().chain(&self.eval))
    }
}

/// Largest vocabulary built from a corpus, special tokens included.
pub const MAX_VOCAB: usize = 1024;

/// Vocabulary over the captions of `records` plus every hand-written prompt,
/// so any prompt mode can be used with it.
pub fn vocabulary_for<'r>(records: impl IntoIterator<Item = &'r CaptionRecord>) -> Result<Vocabulary> {
    let mut texts: Vec<String> = records.into_iter().map(|r| r.caption.join(" ")).collect();
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    texts.extend(Style::ALL.iter().map(|s| s.manual_prompt().to_string()));
    texts.push(SHARED_PROMPT.to_string());
    Vocabulary::build(&texts, MAX_VOCAB)
}
