//! Staged outputs and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Outputs written under `.partial` names and renamed together on commit.
/// Dropping without commit removes everything staged.
pub struct Staged {
    entries: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

fn partial_name(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn remove(path: &Path) {
    if path.is_dir() {
        let _ = fs::remove_dir_all(path);
    } else {
        let _ = fs::remove_file(path);
    }
}

impl Staged {
    pub fn new() -> Self {
        Self { entries: Vec::new(), committed: false }
    }

    fn claim(&mut self, target: &Path) -> Result<PathBuf, CliError> {
        if target.exists() {
            return Err(CliError::OutputExists(target.to_path_buf()));
        }
        let partial = partial_name(target);
        remove(&partial);
        self.entries.push((partial.clone(), target.to_path_buf()));
        Ok(partial)
    }

    /// Staging directory standing in for `target`.
    pub fn dir(&mut self, target: &Path) -> Result<PathBuf, CliError> {
        let partial = self.claim(target)?;
        fs::create_dir_all(&partial).map_err(CliError::io(&partial))?;
        Ok(partial)
    }

    /// Staging file path standing in for `target`.
    pub fn file(&mut self, target: &Path) -> Result<PathBuf, CliError> {
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(CliError::Io {
                    path: parent.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
                });
            }
        }
        self.claim(target)
    }

    pub fn commit(mut self) -> Result<(), CliError> {
        for (partial, target) in &self.entries {
            fs::rename(partial, target).map_err(CliError::io(target))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            for (partial, _) in &self.entries {
                remove(partial);
            }
        }
    }
}

/// Everything needed to rerun the command that produced an artifact.
#[derive(Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub config: Value,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            tool: "jere",
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            config,
            artifacts: Vec::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Self {
        self.inputs.insert(role.to_string(), path.display().to_string());
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(CliError::io(path))
}

/// Renders the fields of one or more JSON objects as `key = value` lines
/// readable by `--config`; arrays become comma lists.
pub fn flat_config(objects: &[&Value]) -> String {
    let mut out = String::new();
    for obj in objects {
        let Some(map) = obj.as_object() else { continue };
        for (k, v) in map {
            let rendered = match v {
                Value::String(s) => s.clone(),
                Value::Array(items) => items.iter().map(Value::to_string).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {rendered}\n"));
        }
    }
    out
}
