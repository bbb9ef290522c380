//! Binary checkpoint: `XINET1`, a little-endian `u64` header length, a JSON
//! header, then raw little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Variant, XiNetConfig};
use super::xinet::XiNet;
use crate::error::{Error, Result};
use crate::train::OptState;

pub const MAGIC: &[u8; 6] = b"XINET1";

const MOMENT1: &str = "opt.m:";
const MOMENT2: &str = "opt.v:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in values (not bytes) from the start of the data section.
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: XiNetConfig,
    epoch: usize,
    optimizer_step: Option<u64>,
    tensors: Vec<TensorEntry>,
}

/// Trained weights with enough state to resume.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: XiNet<f32>,
    pub optimizer: Option<OptState<f32>>,
    /// Epochs completed.
    pub epoch: usize,
}

impl Checkpoint {
    pub fn new(model: XiNet<f32>, optimizer: Option<OptState<f32>>, epoch: usize) -> Self {
        Self { model, optimizer, epoch }
    }

    pub fn config(&self) -> &XiNetConfig {
        &self.model.config
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut data: Vec<f32> = Vec::with_capacity(self.model.num_parameters());
        let mut push = |name: String, shape: &[usize], values: &[f32]| {
            entries.push(TensorEntry {
                name,
                shape: shape.to_vec(),
                offset: data.len(),
            });
            data.extend_from_slice(values);
        };
        for (name, t) in self.model.params.iter() {
            push(name.to_string(), t.shape(), t.data());
        }
        if let Some(opt) = &self.optimizer {
            opt.check(&self.model.params)?;
            for (((name, t), m), v) in self.model.params.iter().zip(&opt.m).zip(&opt.v) {
                push(format!("{MOMENT1}{name}"), t.shape(), m);
                push(format!("{MOMENT2}{name}"), t.shape(), v);
            }
        }
        let header = Header {
            config: self.model.config.clone(),
            epoch: self.epoch,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + 4 * data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(fmt("bad magic, not a checkpoint"));
        }
        let rest = &bytes[MAGIC.len()..];
        let len_bytes: [u8; 8] = rest
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| fmt("truncated header length"))?;
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| fmt("header too large"))?;
        let json = rest
            .get(8..8usize.saturating_add(header_len))
            .ok_or_else(|| fmt("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::Format(format!("header: {e}")))?;
        let body = &rest[8 + header_len..];
        if !body.len().is_multiple_of(4) {
            return Err(fmt("data section is not a whole number of f32 values"));
        }
        let values: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let mut model = XiNet::<f32>::new(header.config.clone())?;
        let mut opt = header.optimizer_step.map(|step| {
            let mut o = OptState::new(&model.params);
            o.step = step;
            o
        });
        let mut seen = vec![false; model.params.len()];
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let slice = e
                .offset
                .checked_add(n)
                .and_then(|end| values.get(e.offset..end))
                .ok_or_else(|| Error::Format(format!("tensor `{}` runs past the end of the file", e.name)))?;
            let (base, slot) = if let Some(p) = e.name.strip_prefix(MOMENT1) {
                (p, 1)
            } else if let Some(p) = e.name.strip_prefix(MOMENT2) {
                (p, 2)
            } else {
                (e.name.as_str(), 0)
            };
            let id = model
                .params
                .id(base)
                .ok_or_else(|| Error::Format(format!("unknown tensor name `{}`", e.name)))?;
            if model.params.get(id).shape() != e.shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    e.name,
                    e.shape,
                    model.params.get(id).shape()
                )));
            }
            match (slot, opt.as_mut()) {
                (0, _) => {
                    model.params.assign(base, slice.to_vec())?;
                    seen[id.index()] = true;
                }
                (1, Some(o)) => o.m[id.index()] = slice.to_vec(),
                (2, Some(o)) => o.v[id.index()] = slice.to_vec(),
                _ => return Err(Error::Format(format!("optimizer tensor `{}` without optimizer state", e.name))),
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            let id = model.params.id_at(i);
            return Err(Error::Format(format!("missing tensor `{}`", model.params.name(id))));
        }
        if !model.params.all_finite() {
            return Err(fmt("non-finite parameter value"));
        }
        Ok(Self {
            model,
            optimizer: opt,
            epoch: header.epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and insists on a particular variant.
    pub fn load_variant(path: &Path, expected: Variant) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.expect_variant(expected)?;
        Ok(ck)
    }

    pub fn expect_variant(&self, expected: Variant) -> Result<()> {
        let found = self.model.variant();
        if found != expected {
            return Err(Error::VariantMismatch {
                expected: expected.name().into(),
                found: found.name().into(),
            });
        }
        Ok(())
    }
}

