//! File helpers that keep source line numbers for error messages.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// A parsed record and the 1-based line it came from.
pub struct Lined<T> {
    pub line: usize,
    pub value: T,
}

pub fn read_lines<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<Lined<T>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line)
            .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(Lined { line: i + 1, value });
    }
    Ok(out)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    Ok(read_lines(path)?.into_iter().map(|l| l.value).collect())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_records<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> CliResult<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| CliError::runtime(e.to_string()))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

/// Write to a temporary sibling, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = sibling(path, "tmp");
    let mut file = fs::File::create(&tmp)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", tmp.display())))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// `dir/mos.jsonl` + "raters" -> `dir/mos.raters.jsonl`.
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}
