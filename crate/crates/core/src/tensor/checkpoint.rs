//! Two-file checkpoint: a text manifest plus a raw little-endian `f64` payload.
//!
//! ```text
//! # tgmixer checkpoint v1
//! # config k=30
//! # config d_time=100
//! payload model.bin
//! mixer.token_fc1.weight 15 30 0
//! mixer.token_fc1.bias 15 1 3600
//! ```
//!
//! Tensor lines are `name rows cols byte_offset` in payload order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAGIC: &str = "# tgmixer checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// `key=value` pairs echoed into the manifest header.
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(TensorEntry, DenseMatrix)>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&DenseMatrix> {
        self.tensors.iter().find(|(e, _)| e.name == name).map(|(_, m)| m)
    }
}

fn payload_path(manifest: &Path, payload_name: &str) -> PathBuf {
    manifest
        .parent()
        .map(|d| d.join(payload_name))
        .unwrap_or_else(|| PathBuf::from(payload_name))
}

/// Writes `manifest` and a sibling payload file named after it with a `.bin` extension.
pub fn save(
    manifest: impl AsRef<Path>,
    header: &[(String, String)],
    tensors: &[(&str, &DenseMatrix)],
) -> Result<()> {
    let manifest = manifest.as_ref();
    let payload_name = manifest
        .with_extension("bin")
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Checkpoint(format!("bad manifest path {}", manifest.display())))?;

    let mut text = String::new();
    text.push_str(MAGIC);
    text.push('\n');
    for (k, v) in header {
        if k.contains(char::is_whitespace) || k.contains('=') || v.contains('\n') {
            return Err(Error::Checkpoint(format!("unencodable header entry {k:?}")));
        }
        text.push_str(&format!("# config {k}={v}\n"));
    }
    text.push_str(&format!("payload {payload_name}\n"));

    let mut payload = Vec::new();
    for (name, m) in tensors {
        if name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("tensor name {name:?} has whitespace")));
        }
        text.push_str(&format!("{name} {} {} {}\n", m.rows(), m.cols(), payload.len()));
        for v in m.as_slice() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let ppath = payload_path(manifest, &payload_name);
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))?;
    let mut f = fs::File::create(&ppath).map_err(|e| Error::io(&ppath, e))?;
    f.write_all(&payload).map_err(|e| Error::io(&ppath, e))?;
    Ok(())
}

pub fn load(manifest: impl AsRef<Path>) -> Result<Checkpoint> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint manifest",
            manifest.display()
        )));
    }
    let mut header = Vec::new();
    let mut payload_name = None;
    let mut entries = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("# config ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header line {line:?}")))?;
            header.push((k.to_string(), v.to_string()));
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("payload ") {
            payload_name = Some(name.trim().to_string());
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("bad tensor line {line:?}")))
        };
        if parts.len() != 4 {
            return Err(Error::Checkpoint(format!("bad tensor line {line:?}")));
        }
        entries.push(TensorEntry {
            name: parts[0].to_string(),
            rows: parse(parts[1])?,
            cols: parse(parts[2])?,
            offset: parse(parts[3])?,
        });
    }
    let payload_name =
        payload_name.ok_or_else(|| Error::Checkpoint("manifest has no payload line".into()))?;
    let ppath = payload_path(manifest, &payload_name);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;

    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let n = e.rows * e.cols;
        let end = e.offset + 8 * n;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} extends past payload end ({end} > {})",
                e.name,
                bytes.len()
            )));
        }
        let data = bytes[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = DenseMatrix::from_vec(e.rows, e.cols, data)?;
        tensors.push((e, m));
    }
    Ok(Checkpoint { header, tensors })
}
