//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SEQTODCK"
//! version      u32      1
//! config       6 × u64  num_layers num_heads model_dim ff_dim vocab_size max_len
//! options      2 × u8   include_db end_tokens
//! vocab        u64 count, then per token: u32 byte length + UTF-8 bytes
//! blocks       u32 count, then per block: u64 rows, u64 cols, rows*cols f64
//! ```
//!
//! Blocks follow [`ModelParams::blocks`] order; vectors are stored as a
//! single row.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::schema::{SerializationOptions, SEGMENT_TOKENS};
use crate::tokenizer::Vocab;

const MAGIC: &[u8; 8] = b"SEQTODCK";
const VERSION: u32 = 1;

/// Everything needed to run a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub options: SerializationOptions,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let w = &mut out;
        w.write_u32::<LittleEndian>(VERSION).unwrap();
        let c = &self.params.config;
        for v in [c.num_layers, c.num_heads, c.model_dim, c.ff_dim, c.vocab_size, c.max_len] {
            w.write_u64::<LittleEndian>(v as u64).unwrap();
        }
        w.write_u8(self.options.include_db as u8).unwrap();
        w.write_u8(self.options.end_tokens as u8).unwrap();
        w.write_u64::<LittleEndian>(self.vocab.len() as u64).unwrap();
        for tok in self.vocab.tokens() {
            w.write_u32::<LittleEndian>(tok.len() as u32).unwrap();
            w.write_all(tok.as_bytes()).unwrap();
        }
        let blocks = self.params.blocks();
        w.write_u32::<LittleEndian>(blocks.len() as u32).unwrap();
        for ((_, data), (r, c)) in blocks.iter().zip(self.params.shapes()) {
            w.write_u64::<LittleEndian>(r as u64).unwrap();
            w.write_u64::<LittleEndian>(c as u64).unwrap();
            for &x in data.iter() {
                w.write_f64::<LittleEndian>(x).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let trunc = |_| bad("truncated file");
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(trunc)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.read_u64::<LittleEndian>().map_err(trunc)? as usize;
        }
        let config = ModelConfig {
            num_layers: dims[0],
            num_heads: dims[1],
            model_dim: dims[2],
            ff_dim: dims[3],
            vocab_size: dims[4],
            max_len: dims[5],
        };
        config.validate()?;
        let options = SerializationOptions {
            include_db: r.read_u8().map_err(trunc)? != 0,
            end_tokens: r.read_u8().map_err(trunc)? != 0,
        };
        let count = r.read_u64::<LittleEndian>().map_err(trunc)? as usize;
        if count != config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {count} tokens but the model expects {}",
                config.vocab_size
            )));
        }
        let mut tokens = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
            if len > bytes.len() {
                return Err(bad("truncated file"));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(trunc)?;
            tokens.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8"))?);
        }
        let vocab = Vocab::from_lines(tokens.iter().map(String::as_str), &SEGMENT_TOKENS)?;

        let mut params = ModelParams::zeros(config);
        let shapes = params.shapes();
        let n_blocks = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if n_blocks != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "{n_blocks} parameter blocks, expected {}",
                shapes.len()
            )));
        }
        for ((name, block), want) in params.blocks_mut().into_iter().zip(shapes) {
            let rows = r.read_u64::<LittleEndian>().map_err(trunc)? as usize;
            let cols = r.read_u64::<LittleEndian>().map_err(trunc)? as usize;
            if (rows, cols) != want {
                return Err(Error::Checkpoint(format!(
                    "block {name} has shape {rows}x{cols}, expected {}x{}",
                    want.0, want.1
                )));
            }
            for x in block.iter_mut() {
                *x = r.read_f64::<LittleEndian>().map_err(trunc)?;
            }
        }
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes after the last block"));
        }
        if !params.is_finite() {
            return Err(bad("non-finite parameter values"));
        }
        Ok(Self { params, vocab, options })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
