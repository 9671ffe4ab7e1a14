use std::io::Write;
use std::path::{Path, PathBuf};

use codemix_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Output directory of one command. Every file a command writes goes
/// through here so the manifest can list it.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path for `name` relative to the run directory, creating parent
    /// directories and recording it.
    pub fn file(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.file(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.file(name)?;
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `manifest.json`: the parsed command, resolved configuration,
    /// seeds, tool versions and the files produced.
    pub fn finish<C: Serialize>(mut self, command: &C, config: Value, seeds: &[u64]) -> Result<Value> {
        let files = std::mem::take(&mut self.files);
        let manifest = json!({
            "command": command,
            "config": config,
            "seeds": seeds,
            "versions": {
                "codemix": env!("CARGO_PKG_VERSION"),
                "checkpoint": codemix_core::checkpoint::VERSION,
            },
            "files": files,
        });
        self.write_json("manifest.json", &manifest)?;
        Ok(json!(self.root.display().to_string()))
    }
}

pub fn print_summary(verb: &str, status: &str, result: Value) {
    let doc = json!({ "command": verb, "status": status, "result": result });
    let text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    // a closed pipe on stdout is not a failure of the command
    let _ = writeln!(std::io::stdout(), "{text}");
}
