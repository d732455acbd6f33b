//! Binary checkpoint: header, parameter body, checksum trailer.
//!
//! ```text
//! "CCAP" | version u32 | 10 x u32 model config | prompt mode u8
//!        | vocab: count u32, then (len u32, utf-8 bytes) per token
//! body   | count u32, then per tensor: name len u32, name, ndim u32,
//!        | dims u32 x ndim, values f32 x prod(dims)
//! trailer| FNV-1a 64 of everything before it, u64
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, PromptMode};
use crate::numerics::{ParamStore, Tensor};
use crate::tokenizer::Vocabulary;

pub const MAGIC: &[u8; 4] = b"CCAP";
pub const VERSION: u32 = 1;

/// A model with the vocabulary and prompt mode it was trained under.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub prompt_mode: PromptMode,
}

/// Rounds every parameter through `f32`, the precision checkpoints store,
/// so a model behaves identically before saving and after loading.
pub fn round_to_storage(model: &mut Model) {
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        model.params_mut().get_mut(id).round_to_f32();
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("field fits in u32").to_le_bytes());
}

fn config_fields(c: &ModelConfig) -> [usize; 10] {
    [
        c.vocab_size,
        c.d_in,
        c.max_seq_len,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.d_ff,
        c.prompt_len,
        c.n_styles,
        c.d_proj,
    ]
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("string is not utf-8".into()))
    }
}

impl Checkpoint {
    pub fn new(model: Model, vocab: Vocabulary, prompt_mode: PromptMode) -> Result<Self> {
        if vocab.len() != model.config().vocab_size {
            return Err(Error::VocabMismatch(format!(
                "model expects {} tokens, vocabulary has {}",
                model.config().vocab_size,
                vocab.len()
            )));
        }
        Ok(Checkpoint {
            model,
            vocab,
            prompt_mode,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize);
        for f in config_fields(self.model.config()) {
            put_u32(&mut out, f);
        }
        out.push(self.prompt_mode.code());
        put_u32(&mut out, self.vocab.len());
        for t in self.vocab.tokens() {
            put_u32(&mut out, t.len());
            out.extend_from_slice(t.as_bytes());
        }
        let params = self.model.params();
        put_u32(&mut out, params.len());
        for (_, name, t) in params.iter() {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for &x in t.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let (content, trailer) = bytes.split_at(bytes.len() - 8);
        if checksum(content) != u64::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(Error::Checkpoint("checksum mismatch; the file is corrupted".into()));
        }
        let mut r = Reader { bytes: content, pos: 4 };
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut f = [0usize; 10];
        for x in &mut f {
            *x = r.u32()?;
        }
        let config = ModelConfig {
            vocab_size: f[0],
            d_in: f[1],
            max_seq_len: f[2],
            d_model: f[3],
            n_layers: f[4],
            n_heads: f[5],
            d_ff: f[6],
            prompt_len: f[7],
            n_styles: f[8],
            d_proj: f[9],
        };
        let code = r.u8()?;
        let prompt_mode =
            PromptMode::from_code(code).ok_or_else(|| Error::Checkpoint(format!("unknown prompt mode code {code}")))?;
        let n_tokens = r.u32()?;
        let mut tokens = Vec::with_capacity(n_tokens.min(content.len()));
        for _ in 0..n_tokens {
            tokens.push(r.string()?);
        }
        let vocab = Vocabulary::from_tokens(tokens);

        let n_params = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let ndim = r.u32()?;
            let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= content.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` has an impossible shape")))?;
            let data = r
                .take(len * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            if params.id(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
            }
            params.add(name, Tensor::new(&shape, data)?);
        }
        if r.pos != content.len() {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        let model = Model::from_params(config, params).map_err(|e| match e {
            Error::Config(m) => Error::Checkpoint(m),
            e => e,
        })?;
        Checkpoint::new(model, vocab, prompt_mode)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
