use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const OBJECT_CLASSES: [&str; 40] = [
    "dog", "cat", "horse", "cow", "sheep", "bird", "car", "bus", "truck", "bicycle", "boat", "train",
    "chair", "table", "bench", "lamp", "clock", "vase", "bottle", "cup", "bowl", "plate", "apple",
    "banana", "orange", "cake", "pizza", "book", "phone", "laptop", "kite", "ball", "umbrella", "bag",
    "hat", "shoe", "tree", "flower", "rock", "fence",
];

pub const ATTRIBUTES: [&str; 10] = [
    "red", "blue", "green", "yellow", "black", "white", "small", "large", "wooden", "striped",
];

pub const RELATIONS: [&str; 6] = ["on", "under", "behind", "near", "beside", "above"];

pub const TEXT_WORDS: [&str; 24] = [
    "open", "closed", "sale", "stop", "exit", "cafe", "hotel", "bakery", "pharmacy", "bank", "taxi",
    "police", "parking", "welcome", "market", "garden", "museum", "station", "library", "school",
    "cinema", "theater", "hospital", "airport",
];

/// Shape of the procedural scene distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    pub object_classes: usize,
    pub attributes: usize,
    pub relations: usize,
    pub text_words: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_relations: usize,
    pub max_text_len: usize,
    /// Chance that a scene carries embedded text when not forced either way.
    pub text_probability: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            object_classes: 40,
            attributes: 10,
            relations: 6,
            text_words: 24,
            min_objects: 1,
            max_objects: 4,
            max_relations: 2,
            max_text_len: 3,
            text_probability: 0.3,
        }
    }
}

/// Column offsets of the feature blocks.
#[derive(Clone, Copy, Debug)]
struct Layout {
    slot: usize,
    class: usize,
    attr: usize,
    rel: usize,
    obj_slot: usize,
    obj_class: usize,
    text: usize,
    width: usize,
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.object_classes >= 40 && self.object_classes <= OBJECT_CLASSES.len(), "object_classes"),
            (self.attributes >= 10 && self.attributes <= ATTRIBUTES.len(), "attributes"),
            (self.relations >= 6 && self.relations <= RELATIONS.len(), "relations"),
            (self.text_words >= 1 && self.text_words <= TEXT_WORDS.len(), "text_words"),
            (self.min_objects >= 1 && self.min_objects <= self.max_objects, "min_objects"),
            (self.max_objects <= 4, "max_objects"),
            (self.max_text_len >= 1 && self.max_text_len <= self.text_words, "max_text_len"),
            ((0.0..=1.0).contains(&self.text_probability), "text_probability"),
        ];
        for (ok, key) in checks {
            if !ok {
                return Err(Error::Config(format!("scene parameter `{key}` out of range")));
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        // row type (object, relation, text) occupies columns 0..3
        let slot = 3;
        let class = slot + self.max_objects;
        let attr = class + self.object_classes;
        let rel = attr + self.attributes;
        let obj_slot = rel + self.relations;
        let obj_class = obj_slot + self.max_objects;
        let text = obj_class + self.object_classes;
        Layout {
            slot,
            class,
            attr,
            rel,
            obj_slot,
            obj_class,
            text,
            width: text + self.text_words,
        }
    }

    /// Width of one feature row.
    pub fn feature_width(&self) -> usize {
        self.layout().width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneObject {
    pub class: usize,
    pub attribute: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneRelation {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

/// A synthetic image: structured content plus its feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub objects: Vec<SceneObject>,
    pub relations: Vec<SceneRelation>,
    /// Indices into [`TEXT_WORDS`], in reading order.
    pub embedded_text: Option<Vec<usize>>,
    pub features: Tensor,
}

impl Scene {
    pub fn new(
        id: u64,
        objects: Vec<SceneObject>,
        relations: Vec<SceneRelation>,
        embedded_text: Option<Vec<usize>>,
        params: &SceneParams,
    ) -> Result<Self> {
        if objects.is_empty() || objects.len() > params.max_objects {
            return Err(Error::InvalidArgument(format!("scene needs 1..={} objects", params.max_objects)));
        }
        for o in &objects {
            if o.class >= params.object_classes || o.attribute >= params.attributes {
                return Err(Error::InvalidArgument("object outside the class/attribute range".into()));
            }
        }
        for r in &relations {
            if r.subject >= objects.len() || r.object >= objects.len() || r.relation >= params.relations {
                return Err(Error::InvalidArgument("relation references a missing object".into()));
            }
        }
        if let Some(text) = &embedded_text {
            if text.is_empty() || text.iter().any(|&w| w >= params.text_words) {
                return Err(Error::InvalidArgument("embedded text outside the word pool".into()));
            }
        }
        let features = scene_features(&objects, &relations, embedded_text.as_deref(), params);
        Ok(Scene {
            id,
            objects,
            relations,
            embedded_text,
            features,
        })
    }

    /// Number of feature rows.
    pub fn rows(&self) -> usize {
        self.objects.len() + self.relations.len() + usize::from(self.embedded_text.is_some())
    }

    pub fn text_tokens(&self) -> Option<Vec<String>> {
        self.embedded_text
            .as_ref()
            .map(|t| t.iter().map(|&w| TEXT_WORDS[w].to_string()).collect())
    }
}

/// Multi-hot rows: one per object, one per relation, one for the text.
fn scene_features(
    objects: &[SceneObject],
    relations: &[SceneRelation],
    text: Option<&[usize]>,
    params: &SceneParams,
) -> Tensor {
    let l = params.layout();
    let rows = objects.len() + relations.len() + usize::from(text.is_some());
    let mut data = vec![0.0; rows * l.width];
    let mut row = |r: usize, cols: &[usize]| {
        for &c in cols {
            data[r * l.width + c] = 1.0;
        }
    };
    for (i, o) in objects.iter().enumerate() {
        row(i, &[0, l.slot + i, l.class + o.class, l.attr + o.attribute]);
    }
    for (j, rel) in relations.iter().enumerate() {
        row(
            objects.len() + j,
            &[
                1,
                l.slot + rel.subject,
                l.class + objects[rel.subject].class,
                l.rel + rel.relation,
                l.obj_slot + rel.object,
                l.obj_class + objects[rel.object].class,
            ],
        );
    }
    if let Some(words) = text {
        let cols: Vec<usize> = std::iter::once(2).chain(words.iter().map(|w| l.text + w)).collect();
        row(rows - 1, &cols);
    }
    Tensor::from_parts(vec![rows, l.width], data)
}

/// Per-item seed derived from a base seed and an item id (splitmix64).
pub fn derive_seed(base: u64, id: u64) -> u64 {
    let mut z = base ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generates a scene deterministically from `seed`. `text` forces embedded
/// text on or off; `None` draws it with the configured probability.
pub fn generate_scene(id: u64, seed: u64, params: &SceneParams, text: Option<bool>) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_obj = rng.gen_range(params.min_objects..=params.max_objects);
    let objects: Vec<SceneObject> = (0..n_obj)
        .map(|_| SceneObject {
            class: rng.gen_range(0..params.object_classes),
            attribute: rng.gen_range(0..params.attributes),
        })
        .collect();
    let mut relations = Vec::new();
    if n_obj >= 2 {
        let n_rel = rng.gen_range(0..=params.max_relations.min(n_obj - 1));
        for _ in 0..n_rel {
            let pair = sample(&mut rng, n_obj, 2);
            relations.push(SceneRelation {
                subject: pair.index(0),
                relation: rng.gen_range(0..params.relations),
                object: pair.index(1),
            });
        }
    }
    let has_text = text.unwrap_or_else(|| rng.gen_bool(params.text_probability));
    let embedded_text = has_text.then(|| {
        let len = rng.gen_range(1..=params.max_text_len);
        let mut words = sample(&mut rng, params.text_words, len).into_vec();
        words.sort_unstable();
        words
    });
    Scene::new(id, objects, relations, embedded_text, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let p = SceneParams::default();
        for seed in 0..20 {
            assert_eq!(generate_scene(1, seed, &p, None).unwrap(), generate_scene(1, seed, &p, None).unwrap());
        }
    }

    #[test]
    fn single_object_scene_has_one_row() {
        let p = SceneParams {
            min_objects: 1,
            max_objects: 1,
            text_probability: 0.0,
            ..Default::default()
        };
        let s = generate_scene(0, 7, &p, None).unwrap();
        assert_eq!(s.features.shape(), &[1, p.feature_width()]);
    }

    #[test]
    fn row_count_formula() {
        let p = SceneParams::default();
        let objects = vec![
            SceneObject { class: 0, attribute: 1 },
            SceneObject { class: 5, attribute: 2 },
            SceneObject { class: 9, attribute: 3 },
        ];
        let relations = vec![
            SceneRelation { subject: 0, relation: 1, object: 2 },
            SceneRelation { subject: 2, relation: 0, object: 1 },
        ];
        let s = Scene::new(3, objects, relations, Some(vec![4, 7]), &p).unwrap();
        assert_eq!(s.rows(), 6);
        assert_eq!(s.features.shape()[0], 6);
        // text row: type flag plus two words
        assert_eq!(s.features.row(5).iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn relations_must_reference_objects() {
        let p = SceneParams::default();
        let objects = vec![SceneObject { class: 0, attribute: 0 }];
        let bad = vec![SceneRelation { subject: 0, relation: 0, object: 1 }];
        assert!(Scene::new(0, objects, bad, None, &p).is_err());
    }

    #[test]
    fn forced_text_is_honored() {
        let p = SceneParams::default();
        for seed in 0..10 {
            assert!(generate_scene(0, seed, &p, Some(true)).unwrap().embedded_text.is_some());
            assert!(generate_scene(0, seed, &p, Some(false)).unwrap().embedded_text.is_none());
        }
    }
}
