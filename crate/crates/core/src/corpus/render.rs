//! Caption templates. Each style's template forces its defining property, so
//! every rendered caption is compliant by construction.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::lexicon::{NEGATIVE_WORDS, POSITIVE_WORDS};
use crate::corpus::scene::{Scene, ATTRIBUTES, OBJECT_CLASSES, RELATIONS, TEXT_WORDS};
use crate::corpus::style::Style;
use crate::error::{Error, Result};

pub const BACKGROUNDS: [&str; 6] = ["sky", "wall", "street", "field", "beach", "forest"];

fn noun_phrase(scene: &Scene, i: usize) -> [&'static str; 3] {
    let o = scene.objects[i];
    ["a", ATTRIBUTES[o.attribute], OBJECT_CLASSES[o.class]]
}

fn factual<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Vec<&'static str> {
    let mut out = Vec::with_capacity(9);
    if let Some(rel) = scene.relations.first() {
        out.extend(noun_phrase(scene, rel.subject));
        out.push(*["is", "sits"].choose(rng).unwrap());
        out.push(RELATIONS[rel.relation]);
        out.extend(noun_phrase(scene, rel.object));
    } else if scene.objects.len() >= 2 {
        out.extend(noun_phrase(scene, 0));
        out.push("and");
        out.extend(noun_phrase(scene, 1));
    } else {
        out.extend(noun_phrase(scene, 0));
    }
    out.push(".");
    out
}

fn medium(scene: &Scene) -> Vec<&'static str> {
    let mut out = Vec::with_capacity(12);
    if let Some(rel) = scene.relations.first() {
        out.extend(noun_phrase(scene, rel.subject));
        out.extend(["is", RELATIONS[rel.relation]]);
        out.extend(noun_phrase(scene, rel.object));
        out.extend(["in", "the", "picture", "."]);
    } else if scene.objects.len() >= 2 {
        out.extend(noun_phrase(scene, 0));
        out.push("and");
        out.extend(noun_phrase(scene, 1));
        out.extend(["are", "in", "the", "picture", "."]);
    } else {
        out.extend(["there", "is"]);
        out.extend(noun_phrase(scene, 0));
        out.extend(["in", "the", "middle", "of", "the", "picture", "."]);
    }
    out
}

fn long<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Vec<&'static str> {
    let mut out = vec!["in", "this", "picture", "there", "is"];
    out.extend(noun_phrase(scene, 0));
    for i in 1..scene.objects.len() {
        out.push(",");
        out.extend(noun_phrase(scene, i));
    }
    for rel in &scene.relations {
        out.extend([
            ",",
            "the",
            OBJECT_CLASSES[scene.objects[rel.subject].class],
            "is",
            RELATIONS[rel.relation],
            "the",
            OBJECT_CLASSES[scene.objects[rel.object].class],
        ]);
    }
    out.extend([",", "with", "a", BACKGROUNDS.choose(rng).unwrap()]);
    out.extend(["far", "away", "in", "the", "background", "."]);
    out
}

fn textual(scene: &Scene) -> Result<Vec<&'static str>> {
    let text = scene.embedded_text.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("scene {} has no embedded text for a textcap caption", scene.id))
    })?;
    let mut out = vec!["a", "sign", "that", "says", "\""];
    out.extend(text.iter().map(|&w| TEXT_WORDS[w]));
    out.extend(["\"", "and"]);
    out.extend(noun_phrase(scene, 0));
    out.push(".");
    Ok(out)
}

/// Renders a caption of `style` for `scene`; `rng` drives the few free
/// word choices (verb, background, lexicon word).
pub fn render_caption<R: Rng + ?Sized>(scene: &Scene, style: Style, rng: &mut R) -> Result<Vec<String>> {
    let words = match style {
        Style::Coco => factual(scene, rng),
        Style::Textcap => textual(scene)?,
        Style::Short => {
            let mut w = noun_phrase(scene, 0).to_vec();
            w.push(".");
            w
        }
        Style::Medium => medium(scene),
        Style::Long => long(scene, rng),
        Style::Positive | Style::Negative => {
            let lexicon = if style == Style::Positive { &POSITIVE_WORDS } else { &NEGATIVE_WORDS };
            let mut w = factual(scene, rng);
            w.insert(1, lexicon.choose(rng).unwrap());
            w
        }
    };
    Ok(words.into_iter().map(str::to_string).collect())
}
