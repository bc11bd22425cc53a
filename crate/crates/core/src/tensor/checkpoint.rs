//! Versioned checkpoint container.
//!
//! Layout: a UTF-8 text header followed by a little-endian `f64` payload.
//!
//! ```text
//! KBQA-CHECKPOINT 1
//! [config]
//! d_model=128
//! ...
//! [vocab]
//! <one token per line, in index order>
//! [params]
//! <name> <dim>x<dim> <byte offset>
//! [payload]
//! <raw bytes>
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "KBQA-CHECKPOINT";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub vocab: Vec<String>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n[config]\n");
        for (k, v) in &self.config {
            header.push_str(&format!("{k}={v}\n"));
        }
        header.push_str("[vocab]\n");
        for tok in &self.vocab {
            header.push_str(tok);
            header.push('\n');
        }
        header.push_str("[params]\n");
        let mut offset = 0usize;
        for (name, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let dims = if dims.is_empty() {
                "scalar".to_string()
            } else {
                dims.join("x")
            };
            header.push_str(&format!("{name} {dims} {offset}\n"));
            offset += t.len() * 8;
        }
        header.push_str("[payload]\n");
        w.write_all(header.as_bytes())?;
        for (_, t) in &self.params {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let marker = b"[payload]\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| CheckpointError::Header("missing [payload] marker".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let payload = &bytes[split + marker.len()..];

        let mut lines = header.lines();
        let first = lines
            .next()
            .ok_or_else(|| CheckpointError::Header("empty header".into()))?;
        let version: u32 = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::Header(format!("bad magic line {first:?}")))?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }

        let mut ckpt = Checkpoint::default();
        let mut section = "";
        let mut manifest = Vec::new();
        for line in lines {
            match line {
                "[config]" | "[vocab]" | "[params]" => {
                    section = line;
                    continue;
                }
                _ => {}
            }
            match section {
                "[config]" => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| CheckpointError::Header(format!("bad config line {line:?}")))?;
                    ckpt.config.push((k.to_string(), v.to_string()));
                }
                "[vocab]" => ckpt.vocab.push(line.to_string()),
                "[params]" => {
                    let parts: Vec<&str> = line.split(' ').collect();
                    if parts.len() != 3 {
                        return Err(CheckpointError::Header(format!("bad param line {line:?}")));
                    }
                    let shape: Vec<usize> = if parts[1] == "scalar" {
                        Vec::new()
                    } else {
                        parts[1]
                            .split('x')
                            .map(|d| d.parse())
                            .collect::<Result<_, _>>()
                            .map_err(|_| CheckpointError::Header(format!("bad shape {line:?}")))?
                    };
                    let offset: usize = parts[2]
                        .parse()
                        .map_err(|_| CheckpointError::Header(format!("bad offset {line:?}")))?;
                    manifest.push((parts[0].to_string(), shape, offset));
                }
                _ => return Err(CheckpointError::Header(format!("line outside section {line:?}"))),
            }
        }
        for (name, shape, offset) in manifest {
            let n: usize = shape.iter().product();
            let end = offset + n * 8;
            if end > payload.len() {
                return Err(CheckpointError::Header(format!("payload too short for {name}")));
            }
            let data = payload[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Header(e.to_string()))?;
            ckpt.params.push((name, t));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        crate::util::write_atomic(path, &buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(f))
    }
}
