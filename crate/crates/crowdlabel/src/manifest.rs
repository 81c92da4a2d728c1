//! Run directory bookkeeping: an exclusive lock and a manifest of stage
//! runs with input and output digests, so an unchanged stage can be skipped.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{read_json, write_json};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "crowdlabel-manifest.json";
pub const LOCK_FILE: &str = ".crowdlabel.lock";

/// Held while a stage runs; removes the lock file on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(run_dir.into())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Digest of the stage arguments, including the seed.
    pub args_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_secs: f64,
    /// RFC 3339 completion time.
    pub completed_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Most recent run per stage.
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        read_json(&path)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        write_json(&run_dir.join(MANIFEST_FILE), self)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.into())
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| Ok(FileDigest { path: p.clone(), sha256: file_sha256(p)? })).collect()
}

pub fn args_sha256<A: Serialize>(args: &A) -> String {
    let json = serde_json::to_vec(args).expect("stage arguments serialize");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// A stage invocation: name, arguments and the files it reads and writes.
pub struct Stage<'a, A: Serialize> {
    pub name: &'a str,
    pub args: &'a A,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl<A: Serialize> Stage<'_, A> {
    /// Runs `body` unless the manifest in `run_dir` shows the same arguments,
    /// inputs and outputs from an earlier run. Without a run directory the
    /// body always runs and nothing is recorded.
    pub fn run(self, run_dir: Option<&Path>, force: bool, body: impl FnOnce() -> Result<()>) -> Result<StageStatus> {
        for p in &self.inputs {
            if !p.exists() {
                return Err(Error::MissingInput(p.clone()));
            }
        }
        let Some(run_dir) = run_dir else {
            body()?;
            return Ok(StageStatus::Ran);
        };
        let _lock = RunLock::acquire(run_dir)?;
        let mut manifest = RunManifest::load(run_dir)?;
        let args = args_sha256(self.args);
        let inputs = digests(&self.inputs)?;
        if !force {
            if let Some(prev) = manifest.stages.get(self.name) {
                let outputs_match = self.outputs.iter().all(|p| p.exists())
                    && digests(&self.outputs).map(|d| d == prev.outputs).unwrap_or(false);
                if prev.args_sha256 == args && prev.inputs == inputs && outputs_match {
                    return Ok(StageStatus::UpToDate);
                }
            }
        }
        let start = Instant::now();
        body()?;
        let record = StageRecord {
            stage: self.name.into(),
            args_sha256: args,
            inputs,
            outputs: digests(&self.outputs)?,
            duration_secs: start.elapsed().as_secs_f64(),
            completed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        manifest.stages.insert(self.name.into(), record);
        manifest.save(run_dir)?;
        Ok(StageStatus::Ran)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn unchanged_stage_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        std::fs::write(&input, "a").unwrap();
        let run = |args: &u64| {
            Stage { name: "copy", args, inputs: vec![input.clone()], outputs: vec![output.clone()] }.run(
                Some(dir.path()),
                false,
                || {
                    std::fs::copy(&input, &output).unwrap();
                    Ok(())
                },
            )
        };
        assert_eq!(run(&1).unwrap(), StageStatus::Ran);
        assert_eq!(run(&1).unwrap(), StageStatus::UpToDate);
        assert_eq!(run(&2).unwrap(), StageStatus::Ran);
        std::fs::write(&input, "b").unwrap();
        assert_eq!(run(&2).unwrap(), StageStatus::Ran);
        std::fs::write(&output, "tampered").unwrap();
        assert_eq!(run(&2).unwrap(), StageStatus::Ran);
    }

    #[test]
    fn missing_input_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let r = Stage { name: "x", args: &0, inputs: vec![dir.path().join("nope")], outputs: vec![] }
            .run(None, false, || Ok(()));
        assert!(matches!(r, Err(Error::MissingInput(_))));
    }
}
