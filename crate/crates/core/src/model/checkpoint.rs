//! Binary checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! "S2SA"  version
//! token_count  { byte_len  utf8_bytes } * token_count
//! vocab_size  emb_dim  hidden_dim
//! f64 LE parameters in ModelParams::tensors() order
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, DEFAULT_CAPACITY};

use super::params::{ModelDims, ModelParams};

pub const MAGIC: &[u8; 4] = b"S2SA";
pub const VERSION: u32 = 1;

pub fn to_bytes(m: &ModelParams, vocab: &Vocabulary) -> Result<Vec<u8>> {
    if vocab.len() != m.vocab_size() {
        return Err(Error::Config(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            m.vocab_size()
        )));
    }
    let mut out = Vec::with_capacity(16 + m.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(vocab.len() as u32).to_le_bytes());
    for tok in vocab.tokens() {
        out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
        out.extend_from_slice(tok.as_bytes());
    }
    let d = m.dims();
    for v in [d.vocab_size, d.emb_dim, d.hidden_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for t in m.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelParams, Vocabulary)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = r.u32("token count")? as usize;
    let mut text = String::new();
    for i in 0..count {
        let len = r.u32("token length")? as usize;
        let tok = std::str::from_utf8(r.take(len, "token")?)
            .map_err(|_| Error::Format(format!("token {i} is not UTF-8")))?;
        text.push_str(tok);
        text.push('\n');
    }
    let vocab = Vocabulary::from_text(&text, DEFAULT_CAPACITY)?;
    let dims = ModelDims {
        vocab_size: r.u32("vocab size")? as usize,
        emb_dim: r.u32("embedding dim")? as usize,
        hidden_dim: r.u32("hidden dim")? as usize,
    };
    if dims.vocab_size != vocab.len() {
        return Err(Error::Format(format!(
            "header vocab size {} disagrees with {} stored tokens",
            dims.vocab_size,
            vocab.len()
        )));
    }
    let mut m = ModelParams::zeros(dims);
    let n = m.num_params();
    let raw = r.take(n * 8, "parameters")?;
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    m.assign_flat(&flat)?;
    Ok((m, vocab))
}

pub fn save_checkpoint(m: &ModelParams, vocab: &Vocabulary, path: &Path) -> Result<()> {
    let bytes = to_bytes(m, vocab)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Vocabulary)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
