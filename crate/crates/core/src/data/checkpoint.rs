//! Binary checkpoint format.
//!
//! Layout (little-endian): the magic `VRNMT1`; a `u32` byte length and that
//! many bytes of UTF-8 `key=value` lines; then `tensors` records of
//! `u32` name length, name bytes, `u32` rank, `u32` dims, `f64` payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Model;
use crate::params::{Dims, ModelConfig, ParamStore};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"VRNMT1";
const OPTIMIZER_PREFIX: &str = "rmsprop.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Free-form entries carried in the configuration block.
    pub meta: BTreeMap<String, String>,
    /// Optimizer accumulators, named like the parameters they track.
    pub optimizer: Option<ParamStore>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint { model, meta: BTreeMap::new(), optimizer: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.model.config;
        let d = cfg.dims;
        let opt_len = self.optimizer.as_ref().map_or(0, ParamStore::len);
        let mut block: Vec<(String, String)> = vec![
            ("variant".into(), cfg.variant.name().into()),
            ("src_vocab".into(), cfg.src_vocab.to_string()),
            ("tgt_vocab".into(), cfg.tgt_vocab.to_string()),
            ("d_e".into(), d.d_e.to_string()),
            ("d_h".into(), d.d_h.to_string()),
            ("d_z".into(), d.d_z.to_string()),
            ("d_a".into(), d.d_a.to_string()),
            ("d_r".into(), d.d_r.to_string()),
            ("tensors".into(), (self.model.params.len() + opt_len).to_string()),
        ];
        block.extend(self.meta.iter().map(|(k, v)| (format!("meta.{k}"), v.clone())));
        let text: String = block.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        let optimizer = self.optimizer.iter().flat_map(|o| o.iter()).map(|(n, t)| (format!("{OPTIMIZER_PREFIX}{n}"), t));
        let params = self.model.params.iter().map(|(n, t)| (n.to_string(), t));
        for (name, t) in params.chain(optimizer) {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len());
            for &dim in t.shape() {
                put_u32(&mut out, dim);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("not a checkpoint (bad magic or unsupported version)"));
        }
        let block_len = r.u32()?;
        let block = std::str::from_utf8(r.take(block_len)?).map_err(|_| Error::format("configuration block is not UTF-8"))?;
        let mut kv = BTreeMap::new();
        for line in block.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::format(format!("bad configuration line {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let field = |k: &str| kv.get(k).ok_or_else(|| Error::format(format!("configuration block lacks {k}")));
        let number = |k: &str| -> Result<usize> {
            field(k)?.parse().map_err(|_| Error::format(format!("configuration value {k} is not a number")))
        };
        let config = ModelConfig::new(
            field("variant")?.parse().map_err(|e: Error| Error::format(e.to_string()))?,
            number("src_vocab")?,
            number("tgt_vocab")?,
            Dims { d_e: number("d_e")?, d_h: number("d_h")?, d_z: number("d_z")?, d_a: number("d_a")?, d_r: number("d_r")? },
        );
        let count = number("tensors")?;

        let mut params = Vec::new();
        let mut optimizer = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()?;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::format("tensor name is not UTF-8"))?.to_string();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format("tensor too large"))?;
            let payload = r.take(numel.checked_mul(8).ok_or_else(|| Error::format("tensor too large"))?)?;
            let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::format(format!("{name}: {e}")))?;
            match name.strip_prefix(OPTIMIZER_PREFIX) {
                Some(base) => optimizer.push((base.to_string(), t)),
                None => params.push((name, t)),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after the last tensor"));
        }
        let params = ParamStore::from_named(params)?;
        let model = Model::new(config, params)?;
        let optimizer = if optimizer.is_empty() { None } else { Some(ParamStore::from_named(optimizer)?) };
        let meta = kv.iter().filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone()))).collect();
        Ok(Checkpoint { model, meta, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::format("checkpoint is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}
