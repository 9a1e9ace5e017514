//! Binary checkpoint container:
//!
//! ```text
//! b"SEPACKPT" | u32 LE version | u64 LE header length | JSON header | f64 LE values
//! ```
//!
//! The header echoes the run configuration, the vocabulary, the training
//! state and the name and shape of every tensor; values follow in header
//! order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::kmeans::KMeans;
use super::train::TrainState;
use crate::corpus::Vocab;
use crate::model::{Model, ModelConfig};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SEPACKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    model: ModelConfig,
    vocab: Vec<String>,
    state: TrainState,
    clusters: Option<KMeans>,
    tensors: Vec<TensorEntry>,
}

/// Everything restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub vocab: Vocab,
    pub state: TrainState,
    pub clusters: Option<KMeans>,
    pub model: Model,
}

pub fn save_checkpoint(
    path: &Path,
    config: &RunConfig,
    vocab: &Vocab,
    state: &TrainState,
    clusters: Option<&KMeans>,
    model: &Model,
) -> Result<()> {
    let params = model.params();
    let header = Header {
        config: config.clone(),
        model: model.config().clone(),
        vocab: vocab.tokens().to_vec(),
        state: state.clone(),
        clusters: clusters.cloned(),
        tensors: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(20 + json.len() + 8 * params.numel());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in params.tensors() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let all = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = all.as_slice();
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len, "header")?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut model = Model::new(header.model.clone())?;
    if header.tensors.len() != model.params().len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            header.tensors.len(),
            model.params().len()
        )));
    }
    let ids: Vec<_> = model.params().ids().collect();
    for (entry, id) in header.tensors.iter().zip(ids) {
        let expected_name = &model.params().names()[id.index()];
        let expected_shape = model.params().get(id).shape().to_vec();
        if &entry.name != expected_name || entry.shape != expected_shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, model expects {} with shape {:?}",
                entry.name, entry.shape, expected_name, expected_shape
            )));
        }
        let n = expected_shape.iter().product::<usize>();
        let raw = take(&mut bytes, 8 * n, &entry.name)?;
        let data = model.params_mut().get_mut(id).data_mut();
        for (x, chunk) in data.iter_mut().zip(raw.chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok(Checkpoint {
        config: header.config,
        vocab: Vocab::from_tokens(header.vocab)?,
        state: header.state,
        clusters: header.clusters,
        model,
    })
}
