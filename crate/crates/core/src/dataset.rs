//! Corpus builders: CFG/scene-graph pairs and seeded-bug repair tasks.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cfg::{ast::pretty, gen::random_program};
use crate::graph::SceneGraph;
use crate::metrics::layout;
use crate::repair::{apply_patch, copy_tree, run_command, tail, Artifact, Edit, PatchCandidate, RepairTask};

/// Default minimum size (exclusive) for corpus programs.
pub const DEFAULT_LOC_THRESHOLD: usize = 20;

/// Canvas the seeded-bug artifacts are laid out on.
pub const ARTIFACT_CANVAS: (u32, u32) = (640, 480);

const TASK_TIMEOUT_SECS: f64 = 10.0;
const SITES_PER_OPERATOR: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("template {name}: {reason}")]
    Template { name: String, reason: String },
    #[error("template {name}: no mutation makes its test fail")]
    NoViableMutation { name: String },
    #[error("{id}: {reason}")]
    Invariant { id: String, reason: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DatasetError + '_ {
    move |e| DatasetError::Io { path: path.display().to_string(), reason: e.to_string() }
}

/// Non-blank lines that are not `//` comments.
pub fn count_loc(source: &str) -> usize {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub artifact_path: PathBuf,
    pub golden_ssg_path: PathBuf,
    pub golden_mermaid_path: PathBuf,
}

/// Writes `n` random mini-language programs of more than `min_loc` lines
/// into `dir` as `p0000.mini`, `p0001.mini`, ... Programs are grown by
/// appending random statement lists until they are long enough.
pub fn generate_programs(dir: &Path, n: usize, min_loc: usize, seed: u64) -> Result<Vec<PathBuf>, DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut stmts = Vec::new();
        let mut text = String::new();
        while count_loc(&text) <= min_loc {
            stmts.extend(random_program(&mut rng));
            text = pretty(&stmts);
        }
        let path = dir.join(format!("p{i:04}.mini"));
        std::fs::write(&path, format!("// generated program {i}\n{text}")).map_err(io_err(&path))?;
        out.push(path);
    }
    Ok(out)
}

/// Extracts every `*.mini` file in `src` with more than `loc_threshold`
/// lines of code and writes `<id>.mini`, `<id>.ssg.json` and `<id>.mmd`
/// plus `manifest.json` into `out`. Files that fail to parse are logged and
/// skipped. Entries are sorted by id.
pub fn build_cfg_corpus(src: &Path, out: &Path, loc_threshold: usize) -> Result<Vec<CorpusEntry>, DatasetError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(src)
        .map_err(io_err(src))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "mini") && p.is_file())
        .collect();
    files.sort();
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let built: Vec<Option<(String, String, SceneGraph, String)>> = files
        .par_iter()
        .map(|path| -> Result<_, DatasetError> {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            if count_loc(&text) <= loc_threshold {
                return Ok(None);
            }
            let g = match crate::cfg::extract(&text, false) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    return Ok(None);
                }
            };
            let mmd = crate::mermaid::serialize(&g)
                .map_err(|e| DatasetError::Invariant { id: id.clone(), reason: e.to_string() })?;
            let back = crate::mermaid::parse(&mmd)
                .map_err(|e| DatasetError::Invariant { id: id.clone(), reason: e.to_string() })?;
            if !back.isomorphic(&g) {
                return Err(DatasetError::Invariant { id, reason: "mermaid round trip changed the graph".into() });
            }
            Ok(Some((id, text, g, mmd.0)))
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::new();
    for (id, text, g, mmd) in built.into_iter().flatten() {
        let entry = CorpusEntry {
            artifact_path: PathBuf::from(format!("{id}.mini")),
            golden_ssg_path: PathBuf::from(format!("{id}.ssg.json")),
            golden_mermaid_path: PathBuf::from(format!("{id}.mmd")),
            id,
        };
        for (rel, body) in [(&entry.artifact_path, text), (&entry.golden_ssg_path, g.to_json()), (&entry.golden_mermaid_path, mmd)] {
            let p = out.join(rel);
            std::fs::write(&p, body).map_err(io_err(&p))?;
        }
        entries.push(entry);
    }
    let manifest = out.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&entries).expect("plain data")).map_err(io_err(&manifest))?;
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    FlipComparison,
    OffByOne,
    SwapBranches,
    DeleteAttribute,
    RenameIdentifier,
}

pub const OPERATORS: [MutationOp; 5] = [
    MutationOp::FlipComparison,
    MutationOp::OffByOne,
    MutationOp::SwapBranches,
    MutationOp::DeleteAttribute,
    MutationOp::RenameIdentifier,
];

fn pattern(cell: &'static OnceLock<Regex>, src: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(src).expect("valid pattern"))
}

fn is_html(file: &str) -> bool {
    file.ends_with(".html") || file.ends_with(".htm")
}

/// A candidate edit: the byte range to replace and its replacement.
type Site = (Range<usize>, String);

/// Every place in `text` where `op` can be applied.
pub fn mutation_sites(op: MutationOp, file: &str, text: &str) -> Vec<(Range<usize>, String)> {
    static SHELL_CMP: OnceLock<Regex> = OnceLock::new();
    static ARITH: OnceLock<Regex> = OnceLock::new();
    static ARITH_CMP: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    static ARMS: OnceLock<Regex> = OnceLock::new();
    static ATTR: OnceLock<Regex> = OnceLock::new();
    static VAR_USE: OnceLock<Regex> = OnceLock::new();

    let html = is_html(file);
    let mut sites: Vec<Site> = Vec::new();
    match op {
        MutationOp::FlipComparison if !html => {
            for m in pattern(&SHELL_CMP, r"-(lt|le|gt|ge)\b").find_iter(text) {
                let flipped = match m.as_str() {
                    "-lt" => "-le",
                    "-le" => "-lt",
                    "-gt" => "-ge",
                    _ => "-gt",
                };
                sites.push((m.range(), flipped.into()));
            }
            for span in pattern(&ARITH, r"\(\(.*?\)\)").find_iter(text) {
                for m in pattern(&ARITH_CMP, r" (<=|>=|<|>) ").find_iter(span.as_str()) {
                    let flipped = match m.as_str().trim() {
                        "<" => " <= ",
                        "<=" => " < ",
                        ">" => " >= ",
                        _ => " > ",
                    };
                    let start = span.start() + m.start();
                    sites.push((start..start + m.len(), flipped.into()));
                }
            }
        }
        MutationOp::OffByOne if !html => {
            let bytes = text.as_bytes();
            for m in pattern(&NUMBER, r"\b\d+\b").find_iter(text) {
                let before = m.start().checked_sub(1).map(|i| bytes[i]);
                let after = bytes.get(m.end()).copied();
                if matches!(before, Some(b'$' | b'>' | b'&')) || after == Some(b'>') {
                    continue;
                }
                let Ok(n) = m.as_str().parse::<u64>() else { continue };
                sites.push((m.range(), (n + 1).to_string()));
            }
        }
        MutationOp::SwapBranches if !html => {
            for c in pattern(&ARMS, r"then ([^;\n]+); else ([^;\n]+); fi").captures_iter(text) {
                let whole = c.get(0).expect("group 0");
                sites.push((whole.range(), format!("then {}; else {}; fi", &c[2], &c[1])));
            }
        }
        MutationOp::DeleteAttribute if html => {
            for m in pattern(&ATTR, r#" [a-zA-Z][a-zA-Z-]*="[^"]*""#).find_iter(text) {
                sites.push((m.range(), String::new()));
            }
        }
        MutationOp::RenameIdentifier if !html => {
            for c in pattern(&VAR_USE, r"\$([a-z_][a-z0-9_]*)\b").captures_iter(text) {
                let name = &c[1];
                if name.len() >= 2 && text.contains(&format!("{name}=")) {
                    let whole = c.get(0).expect("group 0");
                    sites.push((whole.range(), format!("${name}_old")));
                }
            }
        }
        _ => {}
    }
    sites.retain(|(r, rep)| text[r.clone()] != *rep);
    sites
}

/// The inverse edit for a mutation at `range` (in `original`) that was
/// replaced by `replacement`. The SEARCH text covers whole lines of the
/// mutated file and is grown until it occurs exactly once.
pub fn inverse_edit(file: &str, original: &str, range: Range<usize>, replacement: &str) -> Option<Edit> {
    let mutated = format!("{}{}{}", &original[..range.start], replacement, &original[range.end..]);
    let m_end = range.start + replacement.len();
    let mut lo = mutated[..range.start].rfind('\n').map_or(0, |i| i + 1);
    let mut hi = mutated[m_end..].find('\n').map_or(mutated.len(), |i| m_end + i);
    loop {
        let search = &mutated[lo..hi];
        if !search.trim().is_empty() && mutated.matches(search).count() == 1 {
            let orig_hi = hi - replacement.len() + range.len();
            return Some(Edit { path: file.into(), search: search.into(), replace: original[lo..orig_hi].into() });
        }
        let (old_lo, old_hi) = (lo, hi);
        if lo > 0 {
            lo = mutated[..lo - 1].rfind('\n').map_or(0, |i| i + 1);
        }
        if hi + 1 < mutated.len() {
            hi = mutated[hi + 1..].find('\n').map_or(mutated.len(), |i| hi + 1 + i);
        }
        if (lo, hi) == (old_lo, old_hi) {
            return None;
        }
    }
}

/// `template.json` inside a template directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub issue: String,
    pub test_command: Vec<String>,
    /// Files the mutation operators may touch.
    pub mutable: Vec<String>,
    /// HTML file whose scene graph is the task artifact.
    pub artifact: String,
    /// Scene-graph node the segmentation scenarios point at.
    pub focus: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub op: MutationOp,
    pub file: String,
    pub original: String,
    pub mutated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededBug {
    #[serde(flatten)]
    pub task: RepairTask,
    pub template: String,
    pub mutation: Mutation,
    pub golden_patch: PatchCandidate,
}

/// A seeded-bug set and the three scripted scenarios that go with it.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededSet {
    pub bugs: Vec<SeededBug>,
    pub oracle: BTreeMap<String, String>,
    pub wrong_then_right: BTreeMap<String, String>,
    pub always_wrong: BTreeMap<String, String>,
}

struct Template {
    name: String,
    dir: PathBuf,
    spec: TemplateSpec,
    files: BTreeMap<String, String>,
}

fn load_templates(dir: &Path) -> Result<Vec<Template>, DatasetError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("template.json").is_file())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        let name = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let bad = |reason: String| DatasetError::Template { name: name.clone(), reason };
        let spec_path = d.join("template.json");
        let text = std::fs::read_to_string(&spec_path).map_err(io_err(&spec_path))?;
        let spec: TemplateSpec = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let mut files = BTreeMap::new();
        for f in spec.mutable.iter().chain([&spec.artifact]) {
            let p = d.join(f);
            let body = std::fs::read_to_string(&p).map_err(|e| bad(format!("{f}: {e}")))?;
            files.insert(f.clone(), body);
        }
        if spec.test_command.is_empty() {
            return Err(bad("empty test_command".into()));
        }
        out.push(Template { name, dir: d, spec, files });
    }
    if out.is_empty() {
        return Err(DatasetError::Io { path: dir.display().to_string(), reason: "no templates found".into() });
    }
    Ok(out)
}

fn scratch_copy(t: &Template) -> Result<tempfile::TempDir, DatasetError> {
    let tmp = tempfile::tempdir().map_err(io_err(&t.dir))?;
    copy_tree(&t.dir, tmp.path()).map_err(io_err(&t.dir))?;
    std::fs::remove_file(tmp.path().join("template.json")).map_err(io_err(tmp.path()))?;
    Ok(tmp)
}

fn wrong_patch(golden: &PatchCandidate) -> PatchCandidate {
    let edits = golden.edits.iter().map(|e| Edit { replace: e.search.clone(), ..e.clone() }).collect();
    PatchCandidate { edits }
}

/// Builds `n` seeded-bug tasks from the templates in `templates`, writing
/// each mutated codebase and artifact under `out/<id>/`, the task list to
/// `out/manifest.json`, and the scripted scenarios `oracle.json`,
/// `wrong_then_right.json` and `always_wrong.json` next to it.
///
/// Task `i` uses template `i mod T`; operators are tried in a rotating
/// order so a set of 20 over five templates exercises several of them.
/// A mutation is kept only if the test fails with it and passes again once
/// the golden patch is applied.
pub fn seed_bugs(templates: &Path, out: &Path, n: usize, seed: u64) -> Result<SeededSet, DatasetError> {
    let templates = load_templates(templates)?;
    let timeout = Duration::from_secs_f64(TASK_TIMEOUT_SECS);
    for t in &templates {
        let tmp = scratch_copy(t)?;
        let v = run_command(tmp.path(), &t.spec.test_command, timeout);
        if !v.passed() {
            return Err(DatasetError::Template {
                name: t.name.clone(),
                reason: format!("test does not pass before mutation: {}", tail(v.output(), 400)),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = SeededSet {
        bugs: Vec::new(),
        oracle: BTreeMap::new(),
        wrong_then_right: BTreeMap::new(),
        always_wrong: BTreeMap::new(),
    };
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for i in 0..n {
        let ti = i % templates.len();
        let t = &templates[ti];
        let id = format!("{}-{i:02}", t.name);
        let (mutation, golden, output) = pick_mutation(t, i / templates.len() + ti, &mut rng, timeout)?;

        let task_dir = out.join(&id);
        if task_dir.exists() {
            std::fs::remove_dir_all(&task_dir).map_err(io_err(&task_dir))?;
        }
        let code = task_dir.join("code");
        std::fs::create_dir_all(&code).map_err(io_err(&code))?;
        copy_tree(&t.dir, &code).map_err(io_err(&code))?;
        std::fs::remove_file(code.join("template.json")).map_err(io_err(&code))?;
        let mut_path = code.join(&mutation.file);
        let mutated_text = t.files[&mutation.file].replacen(&mutation.original, &mutation.mutated, 1);
        std::fs::write(&mut_path, &mutated_text).map_err(io_err(&mut_path))?;

        let html = std::fs::read_to_string(code.join(&t.spec.artifact)).map_err(io_err(&code))?;
        let g = crate::html::html_to_ssg(&html).map_err(|e| DatasetError::Template {
            name: t.name.clone(),
            reason: format!("{}: {e}", t.spec.artifact),
        })?;
        let boxes = layout(&g, ARTIFACT_CANVAS.0, ARTIFACT_CANVAS.1)
            .map_err(|e| DatasetError::Template { name: t.name.clone(), reason: e.to_string() })?;
        let g = g.map_bboxes(|n| boxes.get(&n.id).copied());
        let focus = g.node(&t.spec.focus).and_then(|n| n.bbox).ok_or_else(|| DatasetError::Template {
            name: t.name.clone(),
            reason: format!("focus node {} not in the artifact", t.spec.focus),
        })?;
        let ssg_path = task_dir.join("artifact.ssg.json");
        std::fs::write(&ssg_path, g.to_json()).map_err(io_err(&ssg_path))?;

        let issue = format!("{}\n\nThe test run ends with:\n{}", t.spec.issue, tail(output.trim_end(), 400));
        let task = RepairTask {
            id: id.clone(),
            codebase_root: PathBuf::from(format!("{id}/code")),
            issue_text: issue,
            artifact: Artifact { ssg: Some(PathBuf::from(format!("{id}/artifact.ssg.json"))), ..Artifact::default() },
            test_command: t.spec.test_command.clone(),
            timeout: TASK_TIMEOUT_SECS,
            max_rounds: crate::segment::DEFAULT_MAX_ROUNDS,
        };
        let segment_reply = format!(
            "<reason>The element around node {} is where the page goes wrong.</reason>\n<result>{focus}</result>",
            t.spec.focus
        );
        let golden_text = golden.to_string();
        let wrong_text = wrong_patch(&golden).to_string();
        set.oracle.insert(format!("patch/{id}/1"), golden_text.clone());
        set.wrong_then_right.insert(format!("patch/{id}/1"), wrong_text.clone());
        set.wrong_then_right.insert(format!("segment/{id}/1"), segment_reply.clone());
        set.wrong_then_right.insert(format!("patch/{id}/2"), golden_text);
        set.always_wrong.insert(format!("patch/{id}/*"), wrong_text);
        set.always_wrong.insert(format!("segment/{id}/*"), segment_reply);
        set.bugs.push(SeededBug { task, template: t.name.clone(), mutation, golden_patch: golden });
    }
    let write_json = |name: &str, value: String| -> Result<(), DatasetError> {
        let p = out.join(name);
        std::fs::write(&p, value + "\n").map_err(io_err(&p))
    };
    write_json("manifest.json", serde_json::to_string_pretty(&set.bugs).expect("plain data"))?;
    write_json("oracle.json", serde_json::to_string_pretty(&set.oracle).expect("plain data"))?;
    write_json("wrong_then_right.json", serde_json::to_string_pretty(&set.wrong_then_right).expect("plain data"))?;
    write_json("always_wrong.json", serde_json::to_string_pretty(&set.always_wrong).expect("plain data"))?;
    Ok(set)
}

/// Tries operators starting at `rotation`, and up to a few random sites per
/// operator, until one breaks the test and its inverse repairs it.
fn pick_mutation(
    t: &Template,
    rotation: usize,
    rng: &mut ChaCha8Rng,
    timeout: Duration,
) -> Result<(Mutation, PatchCandidate, String), DatasetError> {
    for k in 0..OPERATORS.len() {
        let op = OPERATORS[(rotation + k) % OPERATORS.len()];
        let mut sites: Vec<(&String, Site)> = t
            .spec
            .mutable
            .iter()
            .flat_map(|f| mutation_sites(op, f, &t.files[f]).into_iter().map(move |s| (f, s)))
            .collect();
        sites.shuffle(rng);
        for (file, (range, replacement)) in sites.into_iter().take(SITES_PER_OPERATOR) {
            let original = &t.files[file];
            let Some(edit) = inverse_edit(file, original, range.clone(), &replacement) else { continue };
            let tmp = scratch_copy(t)?;
            let mutated = format!("{}{}{}", &original[..range.start], replacement, &original[range.end..]);
            std::fs::write(tmp.path().join(file), &mutated).map_err(io_err(tmp.path()))?;
            let broken = run_command(tmp.path(), &t.spec.test_command, timeout);
            if broken.passed() || matches!(broken, crate::repair::Validation::Fail { timed_out: true, .. }) {
                continue;
            }
            let golden = PatchCandidate { edits: vec![edit.clone()] };
            if apply_patch(tmp.path(), &golden).is_err() {
                continue;
            }
            if !run_command(tmp.path(), &t.spec.test_command, timeout).passed() {
                continue;
            }
            let mutation = Mutation { op, file: file.clone(), original: edit.replace, mutated: edit.search };
            return Ok((mutation, golden, broken.output().to_string()));
        }
    }
    Err(DatasetError::NoViableMutation { name: t.name.clone() })
}
