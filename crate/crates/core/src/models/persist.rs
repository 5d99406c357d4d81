//! Versioned JSON model documents. Floats use round-trip formatting, so a
//! reloaded model predicts bit-for-bit like the original.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const FORMAT: &str = "pavement-xai-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub model: FittedModel,
}

impl ModelDocument {
    pub fn new(model: FittedModel) -> Self {
        ModelDocument {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            model,
        }
    }
}

pub fn to_json(model: &FittedModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDocument::new(model.clone()))?)
}

pub fn from_json(text: &str) -> Result<FittedModel> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    if doc.format != FORMAT || doc.version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported model document {} v{} (expected {FORMAT} v{FORMAT_VERSION})",
            doc.format, doc.version
        )));
    }
    Ok(doc.model)
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), to_json(model)?.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
