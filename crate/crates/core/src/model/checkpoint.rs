//! Single-file checkpoint container.
//!
//! Layout: 8-byte magic, little-endian `u64` manifest length, JSON manifest,
//! then every array as raw little-endian `f32` in manifest order (parameters
//! first, then first and second optimizer moments per listed name).

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserModel, ModelConfig};
use crate::error::{Error, Result};
use crate::tensorcore::{AdamConfig, OptimizerState, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DNTCKPT\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerManifest {
    config: AdamConfig,
    moments: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    params: Vec<TensorEntry>,
    optimizer: Option<OptimizerManifest>,
    curve: Vec<serde_json::Value>,
    train_state: serde_json::Value,
}

/// Everything needed to rebuild a model and resume its training.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
    /// Training-curve records, one JSON object per epoch.
    pub curve: Vec<serde_json::Value>,
    /// Opaque trainer bookkeeping (epoch counters, best score, ...).
    pub train_state: serde_json::Value,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn entry(name: &str, a: &ArrayD<f32>) -> TensorEntry {
    TensorEntry {
        name: name.to_string(),
        shape: a.shape().to_vec(),
    }
}

fn put(buf: &mut Vec<u8>, a: &ArrayD<f32>) {
    for v in a.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, shape: &[usize], name: &str) -> Result<ArrayD<f32>> {
        let count: usize = shape.iter().product();
        let end = self.pos + 4 * count;
        if end > self.data.len() {
            return Err(fmt_err(format!("checkpoint truncated inside array {name}")));
        }
        let vals: Vec<f32> = self.data[self.pos..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        self.pos = end;
        ArrayD::from_shape_vec(IxDyn(shape), vals).map_err(|e| fmt_err(format!("{name}: {e}")))
    }
}

impl Checkpoint {
    pub fn from_model(model: &DenoiserModel) -> Self {
        Self {
            config: model.config().clone(),
            params: model.params.clone(),
            optimizer: None,
            curve: Vec::new(),
            train_state: serde_json::Value::Null,
        }
    }

    pub fn into_model(self) -> Result<DenoiserModel> {
        Ok(DenoiserModel {
            net: Denoiser::new(self.config)?,
            params: self.params,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params: Vec<TensorEntry> = self.params.iter().map(|(n, p)| entry(n, &p.value)).collect();
        let optimizer = self.optimizer.as_ref().map(|o| OptimizerManifest {
            config: o.config,
            moments: o.first_moment.iter().map(|(n, m)| entry(n, m)).collect(),
        });
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            step: self.params.step_count,
            params,
            optimizer,
            curve: self.curve.clone(),
            train_state: self.train_state.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 4 * self.params.num_scalars());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, p) in self.params.iter() {
            put(&mut buf, &p.value);
        }
        if let Some(o) = &self.optimizer {
            for (name, m) in &o.first_moment {
                let v = o
                    .second_moment
                    .get(name)
                    .ok_or_else(|| Error::State(format!("optimizer has no second moment for {name}")))?;
                put(&mut buf, m);
                put(&mut buf, v);
            }
        }
        Ok(buf)
    }

    /// Writes through a temporary file so an interrupted save never clobbers
    /// the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 16 || &data[..8] != CHECKPOINT_MAGIC {
            return Err(fmt_err("not a checkpoint file (bad magic or too short)"));
        }
        let len = u64::from_le_bytes(data[8..16].try_into().expect("8 bytes")) as usize;
        let body = data
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| fmt_err("checkpoint truncated inside manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(body).map_err(|e| fmt_err(format!("invalid checkpoint manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(fmt_err(format!(
                "checkpoint format version {} not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }

        // the manifest must describe exactly the network its config builds
        let net = Denoiser::new(manifest.config.clone()).map_err(|e| fmt_err(format!("checkpoint config: {e}")))?;
        let reference = net.init_params::<f32>(0)?;
        if reference.len() != manifest.params.len() {
            return Err(fmt_err(format!(
                "checkpoint lists {} parameters, config builds {}",
                manifest.params.len(),
                reference.len()
            )));
        }
        for (e, (name, p)) in manifest.params.iter().zip(reference.iter()) {
            if e.name != name {
                return Err(fmt_err(format!("unexpected parameter {} (expected {name})", e.name)));
            }
            if e.shape != p.value.shape() {
                return Err(fmt_err(format!(
                    "parameter {name} has shape {:?} in checkpoint, model needs {:?}",
                    e.shape,
                    p.value.shape()
                )));
            }
        }

        let mut expected = 16 + len;
        let count = |es: &[TensorEntry]| es.iter().map(|e| e.shape.iter().product::<usize>()).sum::<usize>();
        expected += 4 * count(&manifest.params);
        if let Some(o) = &manifest.optimizer {
            for m in &o.moments {
                let p = manifest
                    .params
                    .iter()
                    .find(|e| e.name == m.name)
                    .ok_or_else(|| fmt_err(format!("optimizer moment for unknown parameter {}", m.name)))?;
                if p.shape != m.shape {
                    return Err(fmt_err(format!("optimizer moment {} has shape {:?}", m.name, m.shape)));
                }
            }
            expected += 8 * count(&o.moments);
        }
        if data.len() != expected {
            return Err(fmt_err(format!(
                "checkpoint payload is {} bytes, manifest implies {expected}",
                data.len()
            )));
        }

        let mut r = Reader { data, pos: 16 + len };
        let mut params = ParamStore::new();
        for e in &manifest.params {
            params.insert(e.name.clone(), r.take(&e.shape, &e.name)?)?;
        }
        params.step_count = manifest.step;
        let optimizer = match manifest.optimizer {
            Some(o) => {
                let mut first = IndexMap::new();
                let mut second = IndexMap::new();
                for m in &o.moments {
                    first.insert(m.name.clone(), r.take(&m.shape, &m.name)?);
                    second.insert(m.name.clone(), r.take(&m.shape, &m.name)?);
                }
                let mut state = OptimizerState::new(o.config).map_err(|e| fmt_err(format!("optimizer config: {e}")))?;
                state.first_moment = first;
                state.second_moment = second;
                Some(state)
            }
            None => None,
        };
        Ok(Self {
            config: manifest.config,
            params,
            optimizer,
            curve: manifest.curve,
            train_state: manifest.train_state,
        })
    }
}
