//! SEARCH/REPLACE edit blocks: parsing, rendering, and atomic application.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SEARCH_MARK: &str = "<<<<<<< SEARCH";
pub const DIVIDER: &str = "=======";
pub const REPLACE_MARK: &str = ">>>>>>> REPLACE";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    /// Path relative to the codebase root.
    pub path: String,
    pub search: String,
    pub replace: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchCandidate {
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchFormatError {
    #[error("reply contains no SEARCH/REPLACE blocks")]
    NoBlocks,
    #[error("block {index} ({path}) has no '=======' divider")]
    MissingDivider { index: usize, path: String },
    #[error("block {index} ({path}) is not closed by '>>>>>>> REPLACE'")]
    Unterminated { index: usize, path: String },
    #[error("block {index} names no file")]
    MissingPath { index: usize },
    #[error("block {index} ({path}) has an empty SEARCH section")]
    EmptySearch { index: usize, path: String },
    #[error("block {index} path {path:?} must be relative and stay inside the codebase")]
    UnsafePath { index: usize, path: String },
}

/// True for relative paths made only of normal components.
pub fn is_safe_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

/// Parses every SEARCH/REPLACE block in `text`, in order of appearance.
/// Text outside blocks (prose, code fences) is ignored.
pub fn parse_patch(text: &str) -> Result<PatchCandidate, PatchFormatError> {
    let mut edits = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some(rest) = line.trim_end().strip_prefix(SEARCH_MARK) else { continue };
        let index = edits.len() + 1;
        let path = rest.trim().to_string();
        if path.is_empty() {
            return Err(PatchFormatError::MissingPath { index });
        }
        if !is_safe_relative(&path) {
            return Err(PatchFormatError::UnsafePath { index, path });
        }
        let mut search = Vec::new();
        let mut divided = false;
        for l in lines.by_ref() {
            if l.trim_end() == DIVIDER {
                divided = true;
                break;
            }
            if l.trim_end() == REPLACE_MARK || l.starts_with(SEARCH_MARK) {
                break;
            }
            search.push(l);
        }
        if !divided {
            return Err(PatchFormatError::MissingDivider { index, path });
        }
        let mut replace = Vec::new();
        let mut closed = false;
        for l in lines.by_ref() {
            if l.trim_end() == REPLACE_MARK {
                closed = true;
                break;
            }
            replace.push(l);
        }
        if !closed {
            return Err(PatchFormatError::Unterminated { index, path });
        }
        let search = search.join("\n");
        if search.is_empty() {
            return Err(PatchFormatError::EmptySearch { index, path });
        }
        edits.push(Edit { path, search, replace: replace.join("\n") });
    }
    if edits.is_empty() {
        return Err(PatchFormatError::NoBlocks);
    }
    Ok(PatchCandidate { edits })
}

impl fmt::Display for PatchCandidate {
    /// The block form accepted by [`parse_patch`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edits {
            writeln!(f, "{SEARCH_MARK} {}", e.path)?;
            writeln!(f, "{}", e.search)?;
            writeln!(f, "{DIVIDER}")?;
            if !e.replace.is_empty() {
                writeln!(f, "{}", e.replace)?;
            }
            writeln!(f, "{REPLACE_MARK}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("edit {index}: search text not found in {path}")]
    NotFound { index: usize, path: String },
    #[error("edit {index}: search text occurs {count} times in {path}")]
    Ambiguous { index: usize, path: String, count: usize },
    #[error("edit {index}: file {path} does not exist")]
    FileMissing { index: usize, path: String },
    #[error("edit {index}: path {path:?} escapes the codebase")]
    UnsafePath { index: usize, path: String },
    #[error("edit {index}: {path}: {reason}")]
    Io { index: usize, path: String, reason: String },
}

/// Applies every edit or none. Edits are checked against the file contents
/// as left by the preceding edits; files are written only after all checks
/// pass, and a failed write restores what was already written.
pub fn apply_patch(root: &Path, patch: &PatchCandidate) -> Result<(), ApplyError> {
    let mut originals: BTreeMap<PathBuf, String> = BTreeMap::new();
    let mut current: BTreeMap<PathBuf, String> = BTreeMap::new();
    for (i, e) in patch.edits.iter().enumerate() {
        let index = i + 1;
        let path = e.path.clone();
        if !is_safe_relative(&e.path) {
            return Err(ApplyError::UnsafePath { index, path });
        }
        let full = root.join(&e.path);
        if !current.contains_key(&full) {
            if !full.is_file() {
                return Err(ApplyError::FileMissing { index, path });
            }
            let text = std::fs::read_to_string(&full)
                .map_err(|err| ApplyError::Io { index, path: path.clone(), reason: err.to_string() })?;
            originals.insert(full.clone(), text.clone());
            current.insert(full.clone(), text);
        }
        let text = current.get_mut(&full).expect("loaded above");
        match text.matches(e.search.as_str()).count() {
            0 => return Err(ApplyError::NotFound { index, path }),
            1 => *text = text.replacen(e.search.as_str(), &e.replace, 1),
            count => return Err(ApplyError::Ambiguous { index, path, count }),
        }
    }
    let mut written: Vec<&PathBuf> = Vec::new();
    for (full, text) in &current {
        if let Err(err) = std::fs::write(full, text) {
            for done in written {
                let _ = std::fs::write(done, &originals[done]);
            }
            let path = full.strip_prefix(root).unwrap_or(full).display().to_string();
            return Err(ApplyError::Io { index: 0, path, reason: err.to_string() });
        }
        written.push(full);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(path: &str, search: &str, replace: &str) -> String {
        format!("{SEARCH_MARK} {path}\n{search}\n{DIVIDER}\n{replace}\n{REPLACE_MARK}\n")
    }

    #[test]
    fn one_and_two_blocks() {
        let p = parse_patch(&format!("Fix:\n```\n{}```\n", block("a.txt", "a=1", "a=2"))).unwrap();
        assert_eq!(p.edits, [Edit { path: "a.txt".into(), search: "a=1".into(), replace: "a=2".into() }]);
        let two = parse_patch(&(block("x/b.sh", "one\ntwo", "three") + &block("c.js", "q", ""))).unwrap();
        assert_eq!(two.edits.len(), 2);
        assert_eq!(two.edits[0].path, "x/b.sh");
        assert_eq!(two.edits[0].search, "one\ntwo");
        assert_eq!(two.edits[1].replace, "");
    }

    #[test]
    fn malformed_blocks() {
        let no_div = format!("{SEARCH_MARK} a\nx\n{REPLACE_MARK}\n");
        assert!(matches!(parse_patch(&no_div), Err(PatchFormatError::MissingDivider { index: 1, .. })));
        assert_eq!(parse_patch("nothing here"), Err(PatchFormatError::NoBlocks));
        assert!(matches!(parse_patch(&block("../etc/passwd", "a", "b")), Err(PatchFormatError::UnsafePath { .. })));
        assert!(matches!(parse_patch(&block("/abs", "a", "b")), Err(PatchFormatError::UnsafePath { .. })));
        let empty = format!("{SEARCH_MARK} a\n{DIVIDER}\nb\n{REPLACE_MARK}\n");
        assert!(matches!(parse_patch(&empty), Err(PatchFormatError::EmptySearch { .. })));
        let open = format!("{SEARCH_MARK} a\nx\n{DIVIDER}\ny\n");
        assert!(matches!(parse_patch(&open), Err(PatchFormatError::Unterminated { .. })));
    }

    #[test]
    fn display_round_trips() {
        let p = parse_patch(&(block("a", "x\ny", "z") + &block("b", "q", ""))).unwrap();
        assert_eq!(parse_patch(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn apply_single_edit() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f"), "a=1\n").unwrap();
        apply_patch(dir.path(), &parse_patch(&block("f", "a=1", "a=2")).unwrap()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("f")).unwrap(), "a=2\n");
    }

    #[test]
    fn ambiguous_and_missing_leave_files_alone() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f"), "x\nx\n").unwrap();
        let err = apply_patch(dir.path(), &parse_patch(&block("f", "x", "y")).unwrap()).unwrap_err();
        assert_eq!(err, ApplyError::Ambiguous { index: 1, path: "f".into(), count: 2 });
        assert_eq!(std::fs::read_to_string(dir.path().join("f")).unwrap(), "x\nx\n");
        let err = apply_patch(dir.path(), &parse_patch(&block("g", "x", "y")).unwrap()).unwrap_err();
        assert_eq!(err, ApplyError::FileMissing { index: 1, path: "g".into() });
    }

    #[test]
    fn second_edit_failure_rolls_back_first() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f"), "a=1\n").unwrap();
        std::fs::write(dir.path().join("g"), "b=1\n").unwrap();
        let p = parse_patch(&(block("f", "a=1", "a=2") + &block("g", "zzz", "b=2"))).unwrap();
        assert_eq!(apply_patch(dir.path(), &p).unwrap_err(), ApplyError::NotFound { index: 2, path: "g".into() });
        assert_eq!(std::fs::read_to_string(dir.path().join("f")).unwrap(), "a=1\n");
    }

    #[test]
    fn edits_compose_within_a_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f"), "a\n").unwrap();
        let p = parse_patch(&(block("f", "a", "b") + &block("f", "b", "c"))).unwrap();
        apply_patch(dir.path(), &p).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("f")).unwrap(), "c\n");
    }
}
