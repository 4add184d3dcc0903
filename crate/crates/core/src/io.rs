//! Output-file plumbing: atomic writes and JSONL helpers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes via a temp file in the same directory, then renames into place.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into()),
        std::process::id()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a JSONL file, applying `parse` per non-empty line. Returns the
/// parsed rows and the number of malformed lines skipped.
pub fn read_jsonl<T, F>(path: &Path, mut parse: F) -> Result<(Vec<T>, usize)>
where
    F: FnMut(&str) -> std::result::Result<T, serde_json::Error>,
{
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse(line) {
            Ok(t) => rows.push(t),
            Err(_) => skipped += 1,
        }
    }
    Ok((rows, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/file.txt");
        atomic_write(&path, "hello").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "hello");
        // Overwrite in place.
        atomic_write(&path, "world").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "world");
    }

    #[test]
    fn jsonl_counts_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        fs::write(&path, "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        let (rows, skipped) =
            read_jsonl(&path, |l| serde_json::from_str::<serde_json::Value>(l)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(skipped, 1);
    }
}
