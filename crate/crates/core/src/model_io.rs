//! Versioned on-disk format for trained NAF models (JSON, exact `f64` round trip).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffnet::{LayerSpec, NetParams};
use crate::error::{Error, Result};
use crate::naf::{NafConfig, QModel};

pub const MODEL_FORMAT: &str = "multiq-naf-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    seed: u64,
    naf: NafConfig,
    layers: Vec<LayerSpec>,
    main: Vec<f64>,
    target: Vec<f64>,
}

pub fn model_to_json(m: &QModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        seed: m.seed,
        naf: m.config.clone(),
        layers: m.main.specs().to_vec(),
        main: m.main.values().to_vec(),
        target: m.target.values().to_vec(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn model_from_json(text: &str) -> Result<QModel> {
    // Check the header first so a newer file fails with a version error
    // rather than a schema error.
    let header: serde_json::Value = serde_json::from_str(text)?;
    if header.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::Config("not a multiq model file".into()));
    }
    let found = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != MODEL_VERSION {
        return Err(Error::Version {
            found,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(header)?;
    let main = NetParams::from_values(file.layers.clone(), file.main)?;
    let target = NetParams::from_values(file.layers, file.target)?;
    QModel::from_parts(file.naf, main, target, file.seed)
}

pub fn save_model(m: &QModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<QModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
