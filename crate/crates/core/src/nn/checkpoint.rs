//! Binary parameter checkpoints.
//!
//! ```text
//! b"SMCHKPT\n"                magic
//! u32 LE                      format version
//! u32 LE                      manifest length in bytes
//! manifest                    one line per block: `<name> <d1>x<d2>...`
//! f64 LE ...                  block values, in manifest order
//! ```

use std::path::Path;

use super::mlp::ParameterBlock;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SMCHKPT\n";
pub const FORMAT_VERSION: u32 = 1;

pub fn manifest<'a>(blocks: impl IntoIterator<Item = &'a ParameterBlock>) -> String {
    let mut out = String::new();
    for b in blocks {
        let dims: Vec<String> = b.shape.iter().map(usize::to_string).collect();
        out.push_str(&format!("{} {}\n", b.name, dims.join("x")));
    }
    out
}

pub fn encode(blocks: &[&ParameterBlock]) -> Vec<u8> {
    let manifest = manifest(blocks.iter().copied());
    let n_values: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(16 + manifest.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    for b in blocks {
        for v in &b.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Overwrites the values of `blocks` from `bytes`. The stored manifest must
/// equal the manifest of `blocks` exactly; nothing is written otherwise.
pub fn decode_into(bytes: &[u8], blocks: &mut [&mut ParameterBlock]) -> Result<()> {
    let bad = |m: &str| Error::ManifestMismatch(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(bad("truncated manifest"));
    }
    let stored = std::str::from_utf8(&body[..len]).map_err(|_| bad("manifest is not UTF-8"))?;
    let expected = manifest(blocks.iter().map(|b| &**b));
    if stored != expected {
        let first = stored
            .lines()
            .zip(expected.lines())
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("stored `{a}`, expected `{b}`"))
            .unwrap_or_else(|| {
                format!(
                    "stored {} blocks, expected {}",
                    stored.lines().count(),
                    expected.lines().count()
                )
            });
        return Err(Error::ManifestMismatch(first));
    }
    let data = &body[len..];
    let n_values: usize = blocks.iter().map(|b| b.len()).sum();
    if data.len() != 8 * n_values {
        return Err(bad(&format!("expected {} data bytes, found {}", 8 * n_values, data.len())));
    }
    let mut chunks = data.chunks_exact(8);
    for b in blocks.iter_mut() {
        for v in b.values.iter_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
        if b.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint block {}", b.name)));
        }
    }
    Ok(())
}

pub fn save(path: &Path, blocks: &[&ParameterBlock]) -> Result<()> {
    std::fs::write(path, encode(blocks)).map_err(|e| Error::io(path, e))
}

pub fn load_into(path: &Path, blocks: &mut [&mut ParameterBlock]) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_into(&bytes, blocks)
}
