//! Line-delimited corpus files.
//!
//! Each line is a JSON object with `scene_id`, `domain_tag`, `style_tag`,
//! `caption` (space-joined tokens), `features` (`"M d_in <base64>"`, the
//! payload being little-endian `f32` values in row-major order) and, for
//! scenes that carry text, `embedded_text`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::corpus::mixture::CaptionRecord;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Serialize, Deserialize)]
struct RecordLine {
    scene_id: u64,
    domain_tag: String,
    style_tag: String,
    caption: String,
    features: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedded_text: Option<String>,
}

/// A scene without a caption, as read from a scene file.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneInput {
    pub scene_id: u64,
    pub features: Tensor,
    pub embedded_text: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct SceneLine {
    scene_id: u64,
    features: String,
    #[serde(default)]
    embedded_text: Option<String>,
}

pub fn encode_features(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.data().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    format!("{} {} {}", t.rows(), t.cols(), STANDARD.encode(bytes))
}

pub fn decode_features(s: &str) -> std::result::Result<Tensor, String> {
    let mut parts = s.splitn(3, ' ');
    let mut dim = || -> std::result::Result<usize, String> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| "bad feature dimensions".to_string())
    };
    let (m, d) = (dim()?, dim()?);
    let payload = parts.next().ok_or("missing feature payload")?;
    let bytes = STANDARD.decode(payload).map_err(|e| e.to_string())?;
    if bytes.len() != m * d * 4 {
        return Err(format!("feature payload has {} bytes, expected {}", bytes.len(), m * d * 4));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(&[m, d], data).map_err(|e| e.to_string())
}

fn split_words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn record_to_line(r: &CaptionRecord) -> String {
    let line = RecordLine {
        scene_id: r.scene_id,
        domain_tag: r.domain.tag().to_string(),
        style_tag: r.style.tag().to_string(),
        caption: r.caption.join(" "),
        features: encode_features(&r.features),
        embedded_text: r.embedded_text.as_ref().map(|t| t.join(" ")),
    };
    serde_json::to_string(&line).expect("record serializes")
}

pub fn record_from_line(line: &str, lineno: usize) -> Result<CaptionRecord> {
    let bad = |msg: String| Error::CorpusFormat { line: lineno, msg };
    let r: RecordLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    Ok(CaptionRecord {
        scene_id: r.scene_id,
        domain: r.domain_tag.parse().map_err(|e: Error| bad(e.to_string()))?,
        style: r.style_tag.parse().map_err(|e: Error| bad(e.to_string()))?,
        caption: split_words(&r.caption),
        features: decode_features(&r.features).map_err(bad)?,
        embedded_text: r.embedded_text.as_deref().map(split_words),
    })
}

pub fn write_records(path: &Path, records: &[CaptionRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_to_line(r));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<CaptionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| record_from_line(l, i + 1))
        .collect()
}

/// Reads scenes from a scene file or a corpus file (caption fields are ignored).
pub fn read_scenes(path: &Path) -> Result<Vec<SceneInput>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<SceneInput> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::CorpusFormat { line: i + 1, msg };
        let s: SceneLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if out.iter().any(|o| o.scene_id == s.scene_id) {
            continue;
        }
        out.push(SceneInput {
            scene_id: s.scene_id,
            features: decode_features(&s.features).map_err(bad)?,
            embedded_text: s.embedded_text.as_deref().map(split_words),
        });
    }
    Ok(out)
}

pub fn scene_to_line(s: &SceneInput) -> String {
    let mut v = serde_json::json!({
        "scene_id": s.scene_id,
        "features": encode_features(&s.features),
    });
    if let Some(t) = &s.embedded_text {
        v["embedded_text"] = serde_json::Value::String(t.join(" "));
    }
    v.to_string()
}
