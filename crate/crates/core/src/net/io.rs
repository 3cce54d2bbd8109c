use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Layer, MaskedMlp, MlpConfig, NetError, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"RMSKMLP\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: MlpConfig,
    shapes: Vec<(usize, usize)>,
    classes_sha256: String,
    classes: usize,
}

fn classes_digest(classes: &[String]) -> String {
    let mut h = Sha256::new();
    for c in classes {
        h.update(c.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Layout: magic, version (u32 LE), header length (u32 LE), JSON header,
/// then every weight matrix (row-major) and bias as f64 LE.
pub fn save_model(model: &MaskedMlp, classes: &[String], path: &Path) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        shapes: model.layers.iter().map(|l| l.weights.dim()).collect(),
        classes_sha256: classes_digest(classes),
        classes: classes.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + model.num_parameters() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in &model.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads a model, refusing files trained against a different class list.
pub fn load_model(path: &Path, classes: &[String]) -> Result<MaskedMlp> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| NetError::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    if header.classes != classes.len() || header.classes_sha256 != classes_digest(classes) {
        return Err(NetError::AlphabetMismatch);
    }
    let mut values = bytes[16 + len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let expected: usize = header.shapes.iter().map(|(r, c)| r * c + c).sum();
    if bytes.len() - 16 - len != expected * 8 {
        return Err(bad("weight blob does not match the header shapes"));
    }
    let layers = header
        .shapes
        .iter()
        .map(|&(r, c)| Layer {
            weights: Array2::from_shape_fn((r, c), |_| values.next().expect("sized")),
            bias: Array1::from_shape_fn(c, |_| values.next().expect("sized")),
        })
        .collect();
    let model = MaskedMlp {
        config: header.config,
        layers,
    };
    model.config.validate()?;
    Ok(model)
}
