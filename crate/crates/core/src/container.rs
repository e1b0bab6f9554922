//! The `MYGO1` binary container shared by saved models and memories.
//!
//! ```text
//! magic     5 bytes   "MYGO1"
//! version   u16       FORMAT_VERSION
//! kind      u8        0 = model, 1 = generative memory
//! meta_len  u32       byte length of the metadata block
//! meta      UTF-8     "key=value\n" lines
//! count     u32       number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8), rank u32, extents u32 × rank,
//!   data f64 × product(extents)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ArchConfig, Head, Modality, ModelState};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"MYGO1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Model,
    Memory,
}

impl ContainerKind {
    fn tag(self) -> u8 {
        match self {
            ContainerKind::Model => 0,
            ContainerKind::Memory => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(kind: ContainerKind) -> Self {
        Self { kind, meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("missing metadata key {key:?}")))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Format(format!("bad value {raw:?} for metadata key {key:?}")))
    }

    pub fn take_tensor(&mut self, name: &str) -> Result<Tensor> {
        let i = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(i).1)
    }

    fn meta_block(&self) -> String {
        self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Exact size of [`Container::encode`]'s output.
    pub fn encoded_len(&self) -> usize {
        let header = MAGIC.len() + 2 + 1 + 4 + self.meta_block().len() + 4;
        let body: usize = self
            .tensors
            .iter()
            .map(|(name, t)| 4 + name.len() + 4 + 4 * t.shape().len() + 8 * t.numel())
            .sum();
        header + body
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        let meta = self.meta_block();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic: not a MYGO1 container".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unknown container version {version}")));
        }
        let kind = match r.take(1)?[0] {
            0 => ContainerKind::Model,
            1 => ContainerKind::Memory,
            k => return Err(Error::Format(format!("unknown container kind {k}"))),
        };
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let meta = meta_text
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let numel = numel.ok_or_else(|| Error::Format(format!("tensor {name:?} is too large")))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(&shape, data, true).map_err(|e| Error::Format(format!("tensor {name:?}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after the last tensor", bytes.len() - r.pos)));
        }
        Ok(Self { kind, meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated container at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}

fn model_container(model: &ModelState) -> Container {
    let arch = model.arch();
    let mut c = Container::new(ContainerKind::Model);
    let heads: Vec<String> = model.heads().iter().map(|h| format!("{}:{}", h.task_id, h.n_classes())).collect();
    c.meta("modality", model.modality().as_str())
        .meta("feature_dim", arch.feature_dim)
        .meta("conv1_channels", arch.conv1_channels)
        .meta("conv2_channels", arch.conv2_channels)
        .meta("embed_dim", arch.embed_dim)
        .meta("vocab_size", arch.vocab_size)
        .meta("embedding_frozen", model.embedding_frozen())
        .meta("heads", heads.join(","));
    for (name, t) in model.extractor() {
        c.tensors.push((name.clone(), t.clone()));
    }
    for h in model.heads() {
        c.tensors.push((format!("head.{}.weight", h.task_id), h.weight.clone()));
        c.tensors.push((format!("head.{}.bias", h.task_id), h.bias.clone()));
    }
    c
}

pub fn model_footprint(model: &ModelState) -> usize {
    model_container(model).encoded_len()
}

pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    model_container(model).write(path)
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    decode_model(Container::read(path)?)
}

pub fn decode_model(mut c: Container) -> Result<ModelState> {
    if c.kind != ContainerKind::Model {
        return Err(Error::Format("container holds a generative memory, not a model".into()));
    }
    let modality = Modality::parse(c.get("modality")?).ok_or_else(|| Error::Format("unknown modality".into()))?;
    let arch = ArchConfig {
        feature_dim: c.get_parsed("feature_dim")?,
        conv1_channels: c.get_parsed("conv1_channels")?,
        conv2_channels: c.get_parsed("conv2_channels")?,
        embed_dim: c.get_parsed("embed_dim")?,
        vocab_size: c.get_parsed("vocab_size")?,
    };
    let frozen: bool = c.get_parsed("embedding_frozen")?;
    let head_ids: Vec<usize> = c
        .get("heads")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.split_once(':')
                .and_then(|(id, _)| id.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad head entry {s:?}")))
        })
        .collect::<Result<_>>()?;
    let mut heads = Vec::with_capacity(head_ids.len());
    for id in head_ids {
        let weight = c.take_tensor(&format!("head.{id}.weight"))?;
        let bias = c.take_tensor(&format!("head.{id}.bias"))?;
        heads.push(Head { task_id: id, weight, bias });
    }
    ModelState::from_parts(modality, arch, c.tensors, heads, frozen)
}
