use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use crate::graph::SceneGraph;

pub const DEFAULT_TOP_N: usize = 10;
const MAX_EXCERPT_LINES: usize = 8;

/// Common English and keyword tokens that say nothing about location.
const STOPWORDS: &[&str] = &[
    "the", "and", "for", "not", "but", "with", "this", "that", "from", "when", "then", "else", "was", "are", "has",
    "have", "had", "its", "into", "than", "there", "their", "they", "what", "which", "while", "will", "would",
    "should", "could", "can", "does", "did", "done", "been", "being", "our", "out", "all", "any", "some", "one",
    "two", "also", "only", "just", "more", "most", "such", "very", "you", "your", "how", "why", "who", "where",
    "bug", "issue", "error", "expected", "actual", "instead", "shows", "show", "see", "page", "fix", "after",
    "before", "return", "true", "false", "null", "none", "var", "let", "const", "function", "echo", "div", "span",
    "html", "body", "head", "text", "block", "entry", "exit", "branch", "class", "style", "script",
];

fn term_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_.]{2,}").expect("valid pattern"))
}

/// Candidate search terms from the issue text and every node's content.
pub fn query_terms(issue_text: &str, g: &SceneGraph) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let sources = std::iter::once(issue_text).chain(g.nodes().iter().map(|n| n.content.as_str()));
    for text in sources {
        for m in term_pattern().find_iter(text) {
            let term = m.as_str().trim_end_matches('.');
            if term.len() >= 3 && !STOPWORDS.contains(&term.to_ascii_lowercase().as_str()) {
                out.insert(term.to_string());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileHit {
    /// Path relative to the codebase root, `/`-separated.
    pub path: String,
    pub score: f64,
    /// `(line number, line text)` for lines mentioning any term.
    pub lines: Vec<(usize, String)>,
}

/// Text files under `root`, skipping hidden entries, sorted by path.
pub fn discover_files(root: &Path) -> std::io::Result<Vec<(String, String)>> {
    let meta = std::fs::metadata(root)?;
    if !meta.is_dir() {
        return Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} is not a directory", root.display())));
    }
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.')
    });
    for entry in walker {
        let entry = entry.map_err(std::io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(entry.path()) else { continue };
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        files.push((rel, text));
    }
    Ok(files)
}

/// Ranks files by the sum over matched terms of `tf * ln(N / df)`, where
/// `tf` counts occurrences in the file, `N` is the number of files and `df`
/// the number of files containing the term. Every file matching at least
/// one term is ranked; ties go to the lexically smaller path.
pub fn rank(files: &[(String, String)], terms: &BTreeSet<String>, top_n: usize) -> Vec<FileHit> {
    let n = files.len() as f64;
    let tf: Vec<BTreeMap<&str, usize>> = files
        .iter()
        .map(|(_, text)| {
            terms.iter().filter_map(|t| Some((t.as_str(), text.matches(t.as_str()).count())).filter(|(_, c)| *c > 0)).collect()
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for counts in &tf {
        for t in counts.keys() {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut hits: Vec<FileHit> = files
        .iter()
        .zip(&tf)
        .filter(|(_, counts)| !counts.is_empty())
        .map(|((path, text), counts)| {
            let score = counts.iter().map(|(t, c)| *c as f64 * (n / df[t] as f64).ln()).sum();
            let lines = text
                .lines()
                .enumerate()
                .filter(|(_, l)| counts.keys().any(|t| l.contains(t)))
                .take(MAX_EXCERPT_LINES)
                .map(|(i, l)| (i + 1, l.to_string()))
                .collect();
            FileHit { path: path.clone(), score, lines }
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.path.cmp(&b.path)));
    hits.truncate(top_n);
    hits
}

pub fn localize(root: &Path, issue_text: &str, g: &SceneGraph, top_n: usize) -> std::io::Result<Vec<FileHit>> {
    let files = discover_files(root)?;
    Ok(rank(&files, &query_terms(issue_text, g), top_n))
}
