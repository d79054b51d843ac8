//! Line-delimited JSON helpers shared by every file format in the crate.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reads a JSONL file, calling `f` with each decoded record and its 1-based
/// line number. Blank lines are skipped.
pub fn read_each<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: DeserializeOwned,
    F: FnMut(T, usize) -> Result<()>,
{
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, line_no, format!("malformed record: {e}")))?;
        f(record, line_no)?;
    }
    Ok(())
}

pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    read_each(path, |r, _| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Serializes records one per line. Output is deterministic for a given
/// input because every record type uses ordered maps.
pub fn to_string<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<String> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(&r)?);
        buf.push('\n');
    }
    Ok(buf)
}

/// Writes `contents` and returns its hex sha256.
pub fn write_file(path: &Path, contents: &str) -> Result<String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(contents.as_bytes()))
}

pub fn write_records<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<String> {
    write_file(path, &to_string(records)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
