//! Codebook file loading.

use std::path::Path;

use crowdlabel_core::{Category, Codebook};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The framework file shipped with the crate.
pub const SHIPPED: &str = include_str!("../assets/codebook.toml");

/// On-disk layout: a version and a list of `[[category]]` tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookFile {
    pub version: String,
    #[serde(rename = "category")]
    pub categories: Vec<Category>,
}

pub fn parse_codebook(text: &str, origin: &Path) -> Result<Codebook> {
    let file: CodebookFile =
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
    Ok(Codebook::new(file.version, file.categories)?)
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_codebook(&text, path)
}

pub fn shipped_codebook() -> Codebook {
    parse_codebook(SHIPPED, Path::new("assets/codebook.toml")).expect("shipped codebook is valid")
}

/// Codebook at `path`, or the shipped one when no path is configured.
pub fn resolve_codebook(path: Option<&Path>) -> Result<Codebook> {
    match path {
        Some(p) => load_codebook(p),
        None => Ok(shipped_codebook()),
    }
}
