//! On-disk formats: grid files, checkpoints and run manifests.

mod checkpoint;
mod gridfile;
mod manifest;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use gridfile::{GridFile, GridHeader, GRID_AXES, GRID_MAGIC};
pub use manifest::{FileRecord, OutputSet, RunManifest, MANIFEST_NAME};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// `magic ‖ u32 LE header length ‖ JSON header ‖ payload`.
pub fn frame(magic: &[u8; 4], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

pub fn unframe<'a>(magic: &[u8; 4], bytes: &'a [u8], path: &Path) -> Result<(&'a [u8], &'a [u8])> {
    let bad = |m: &str| Error::Format {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(bad(&format!("missing {} magic", String::from_utf8_lossy(magic))));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + len {
        return Err(bad("truncated header"));
    }
    Ok((&bytes[8..8 + len], &bytes[8 + len..]))
}
