//! Run configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crowdlabel_core::{EquivalencePolicy, PreprocessConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Remote endpoint taking `{prompt, task, record_id, settings}` and returning text.
    RemoteHttp,
    /// Fixture file mapping prompt hashes to responses.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub id: String,
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    /// Environment variable holding the bearer credential, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Decoding settings forwarded verbatim to the backend.
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

fn default_retries() -> u32 {
    2
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    #[serde(default = "default_fillers")]
    pub fillers: Vec<String>,
    #[serde(default)]
    pub emoticons: Option<Vec<String>>,
    #[serde(default)]
    pub stickers: Option<Vec<String>>,
    #[serde(default = "default_manual_seconds")]
    pub manual_seconds_per_record: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default, rename = "annotator")]
    pub annotators: Vec<AnnotatorConfig>,
}

fn default_fillers() -> Vec<String> {
    EquivalencePolicy::default().fillers
}

fn default_manual_seconds() -> f64 {
    40.0
}

fn default_in_flight() -> usize {
    8
}

impl Default for Config {
    fn default() -> Self {
        Self {
            codebook: None,
            fillers: default_fillers(),
            emoticons: None,
            stickers: None,
            manual_seconds_per_record: default_manual_seconds(),
            max_in_flight: default_in_flight(),
            annotators: Vec::new(),
        }
    }
}

impl Config {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput(path.into())
            } else {
                Error::io(path, e)
            }
        })?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.codebook.as_mut() {
            fix(p);
        }
        for a in &mut cfg.annotators {
            if let Some(p) = a.fixture.as_mut() {
                fix(p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.annotators {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::Config(format!("annotator id {:?} appears twice", a.id)));
            }
            match a.backend {
                BackendKind::RemoteHttp if a.endpoint.is_none() => {
                    return Err(Error::Config(format!("annotator {:?}: remote_http backend needs an endpoint", a.id)))
                }
                BackendKind::Scripted if a.fixture.is_none() => {
                    return Err(Error::Config(format!("annotator {:?}: scripted backend needs a fixture", a.id)))
                }
                _ => {}
            }
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(String::from("max_in_flight must be at least 1")));
        }
        Ok(())
    }

    pub fn policy(&self) -> EquivalencePolicy {
        EquivalencePolicy::with_fillers(self.fillers.iter().cloned())
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        let mut p = PreprocessConfig::default();
        if let Some(e) = &self.emoticons {
            p.emoticons = e.clone();
        }
        if let Some(s) = &self.stickers {
            p.stickers = s.clone();
        }
        p
    }
}
