//! Atomic report files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

/// Collects a run's inputs, parameters and outputs; written last as
/// `<command>.manifest.json`.
#[derive(Debug)]
pub struct Run {
    command: String,
    out_dir: PathBuf,
    inputs: Vec<InputEntry>,
    parameters: Map<String, Value>,
    outputs: Vec<OutputEntry>,
}

impl Run {
    pub fn new(command: &str, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        Ok(Run {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            parameters: Map::new(),
            outputs: Vec::new(),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn input(&mut self, path: &str, bytes: &[u8]) {
        self.inputs.push(InputEntry { path: path.to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameters serialise");
        self.parameters.insert(key.to_string(), v);
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        write_atomic(&self.out_dir.join(name), bytes)?;
        self.outputs.push(OutputEntry { file: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = serde_json::json!({
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "inputs": self.inputs,
            "parameters": self.parameters,
            "outputs": self.outputs,
        });
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new("demo", dir.path()).unwrap();
        run.param("epsilon", 0.05);
        run.write("a.csv", "x\n1\n").unwrap();
        let path = run.finish().unwrap();
        let m: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(m["command"], "demo");
        assert_eq!(m["parameters"]["epsilon"], 0.05);
        assert_eq!(m["outputs"][0]["file"], "a.csv");
        assert_eq!(m["outputs"][0]["sha256"], sha256_hex(b"x\n1\n"));
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n1\n");
    }
}
