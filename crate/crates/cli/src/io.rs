//! Checksummed inputs, tracked outputs and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{internal, validation, CliError, CliResult};

pub const TOOL: &str = "outsidein";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A file read once; the checksum covers exactly the bytes that get parsed.
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
        Ok(Self { path: path.to_path_buf(), bytes })
    }

    pub fn digest(&self) -> FileDigest {
        FileDigest { path: self.path.display().to_string(), bytes: self.bytes.len() as u64, sha256: sha256_hex(&self.bytes) }
    }

    fn text(&self) -> CliResult<&str> {
        std::str::from_utf8(&self.bytes).map_err(|e| validation(format!("{}: not UTF-8: {e}", self.path.display())))
    }

    pub fn json<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_str(self.text()?).map_err(|e| CliError::parse(&self.path, 0, &e))
    }

    pub fn json_value(&self) -> CliResult<serde_json::Value> {
        self.json()
    }

    /// One value per non-blank line.
    pub fn ndjson<T: DeserializeOwned>(&self) -> CliResult<Vec<T>> {
        let mut out = Vec::new();
        for (i, line) in self.text()?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(line).map_err(|e| CliError::parse(&self.path, i, &e))?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Configuration after defaults and overrides were applied.
    pub config: serde_json::Value,
    pub workers: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<Timing>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config: serde_json::Value::Null,
            workers: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn set_config(&mut self, cfg: &impl Serialize) -> CliResult<()> {
        self.config = serde_json::to_value(cfg).map_err(internal)?;
        Ok(())
    }

    pub fn write(&mut self, bytes: &[u8], path: &Path) -> CliResult<()> {
        write_file(path, bytes)?;
        self.outputs.push(FileDigest { path: path.display().to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json(&mut self, value: &impl Serialize, path: &Path) -> CliResult<()> {
        self.write(&to_json_bytes(value)?, path)
    }

    /// Manifest itself, written last.
    pub fn finish(&self, path: Option<&Path>) -> CliResult<()> {
        let bytes = to_json_bytes(self)?;
        match path {
            Some(p) => write_file(p, &bytes),
            None => {
                eprintln!("{}", String::from_utf8_lossy(&bytes).trim_end());
                Ok(())
            }
        }
    }
}

pub fn to_json_bytes(value: &impl Serialize) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(internal)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn to_ndjson_bytes<T: Serialize>(items: &[T]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(internal)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| internal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| internal(format!("{}: {e}", path.display())))
}

/// Buffered file writer that hashes what passes through it.
pub struct HashingWriter {
    path: PathBuf,
    inner: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
}

impl HashingWriter {
    pub fn create(path: &Path) -> CliResult<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| internal(format!("{}: {e}", parent.display())))?;
        }
        let file = File::create(path).map_err(|e| internal(format!("{}: {e}", path.display())))?;
        Ok(Self { path: path.to_path_buf(), inner: BufWriter::new(file), hasher: Sha256::new(), bytes: 0 })
    }

    pub fn finish(mut self) -> CliResult<FileDigest> {
        self.inner.flush().map_err(|e| internal(format!("{}: {e}", self.path.display())))?;
        Ok(FileDigest { path: self.path.display().to_string(), bytes: self.bytes, sha256: hex::encode(self.hasher.finalize()) })
    }
}

impl Write for HashingWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}
