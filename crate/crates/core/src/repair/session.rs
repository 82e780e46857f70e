use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::graph::{BoundingBox, SceneGraph};
use crate::metrics::{rasterize, Outcome, RasterImage, TaskOutcome};
use crate::model::{scenario_key, ModelBackend, ModelError, ModelRequest, Role};
use crate::prompt::PromptSet;
use crate::segment::{crop, iteration_gate, propose_region, Gate, SegmentError, SegmentationRequest};

use super::localize::{localize, FileHit, DEFAULT_TOP_N};
use super::patch::{apply_patch, parse_patch, PatchCandidate};
use super::validate::{
    copy_tree, extract_script, is_dependency_failure, run_script, tail, validate, Validation,
    DEFAULT_DEPENDENCY_PATTERNS,
};

fn default_timeout() -> f64 {
    60.0
}

fn default_max_rounds() -> u32 {
    crate::segment::DEFAULT_MAX_ROUNDS
}

/// Where the visual side of a task comes from. All fields are optional; a
/// task without any artifact is repaired from the issue text alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Scene graph JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssg: Option<PathBuf>,
    /// PGM raster; drawn from the scene graph when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster: Option<PathBuf>,
    /// `.html` or `.mini` source to extract a scene graph from when `ssg` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairTask {
    pub id: String,
    pub codebase_root: PathBuf,
    pub issue_text: String,
    #[serde(default)]
    pub artifact: Artifact,
    pub test_command: Vec<String>,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("cannot read manifest {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("manifest {path} is not a JSON array of tasks: {reason}")]
    Json { path: String, reason: String },
    #[error("task {id}: {reason}")]
    Invalid { id: String, reason: String },
}

impl RepairTask {
    pub fn check(&self) -> Result<(), TaskError> {
        let invalid = |reason: String| TaskError::Invalid { id: self.id.clone(), reason };
        if !self.codebase_root.is_dir() {
            return Err(invalid(format!("codebase root {} does not exist", self.codebase_root.display())));
        }
        if self.test_command.is_empty() {
            return Err(invalid("test command is empty".into()));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(invalid(format!("timeout must be positive, got {}", self.timeout)));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds must be at least 1".into()));
        }
        Ok(())
    }

    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.codebase_root);
        for p in [&mut self.artifact.ssg, &mut self.artifact.raster, &mut self.artifact.source].into_iter().flatten() {
            fix(p);
        }
    }
}

/// Reads a manifest, resolving relative paths against its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<RepairTask>, TaskError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| TaskError::Io { path: shown.clone(), reason: e.to_string() })?;
    let mut tasks: Vec<RepairTask> =
        serde_json::from_str(&text).map_err(|e| TaskError::Json { path: shown, reason: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for t in &mut tasks {
        t.resolve_against(base);
        t.check()?;
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Init,
    Extracted,
    Localized,
    Generated,
    Validated { passed: bool },
    Done { resolved: bool },
}

impl SessionState {
    fn may_enter(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Init, Extracted)
                | (Extracted, Localized)
                | (Localized, Generated)
                | (Generated, Validated { .. })
                | (Validated { passed: false }, Extracted)
                | (Validated { .. }, Done { .. })
        ) || matches!(next, Done { resolved: false }) && !matches!(self, Done { .. })
    }
}

/// One entry in a session's append-only log. Nothing here depends on wall
/// time or scratch paths, so scripted runs replay to identical logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    State { round: u32, to: SessionState },
    Extract { nodes: usize, edges: usize, raster: Option<(u32, u32)> },
    Localize { files: Vec<String> },
    ModelCall { role: &'static str, key: String, backend: String },
    Patch { files: Vec<String> },
    PatchRejected { reason: String },
    Validation { passed: bool, timed_out: bool, output: String },
    Fallback { passed: bool, script: &'static str },
    Segmentation { bbox: BoundingBox, reason: String, kept_nodes: Option<usize>, note: Option<String> },
    SegmentationSkipped { reason: String },
    Error { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairSession {
    pub task_id: String,
    pub round: u32,
    pub state: SessionState,
    pub log: Vec<Event>,
}

impl RepairSession {
    fn enter(&mut self, to: SessionState) {
        debug_assert!(self.state.may_enter(to), "illegal transition {:?} -> {to:?}", self.state);
        self.state = to;
        self.log.push(Event::State { round: self.round, to });
    }

    fn fail(&mut self, message: String) {
        self.log.push(Event::Error { message });
        self.enter(SessionState::Done { resolved: false });
    }

    pub fn resolved(&self) -> bool {
        self.state == SessionState::Done { resolved: true }
    }

    fn calls(&self, role: Role) -> usize {
        self.log.iter().filter(|e| matches!(e, Event::ModelCall { role: r, .. } if *r == role.as_str())).count()
    }

    pub fn generate_calls(&self) -> usize {
        self.calls(Role::Patch)
    }

    pub fn segmentation_events(&self) -> usize {
        self.log.iter().filter(|e| matches!(e, Event::Segmentation { .. })).count()
    }

    pub fn used_fallback(&self) -> bool {
        self.log.iter().any(|e| matches!(e, Event::Fallback { .. }))
    }

    pub fn outcome(&self) -> TaskOutcome {
        let o = if self.resolved() { Outcome::Resolved } else { Outcome::Unresolved };
        TaskOutcome::new(self.task_id.clone(), o, self.round)
    }
}

/// The model used for each step. They may all be the same backend.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub patch: &'a dyn ModelBackend,
    pub segment: &'a dyn ModelBackend,
    pub fallback: &'a dyn ModelBackend,
}

impl<'a> Backends<'a> {
    pub fn single(b: &'a dyn ModelBackend) -> Self {
        Backends { patch: b, segment: b, fallback: b }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub prompts: PromptSet,
    pub top_n: usize,
    /// Bytes of the previous failure passed back to the model.
    pub feedback_budget: usize,
    pub dependency_patterns: Vec<String>,
    /// Canvas used to draw a raster when the task provides none.
    pub canvas: (u32, u32),
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            prompts: PromptSet::default(),
            top_n: DEFAULT_TOP_N,
            feedback_budget: 8 * 1024,
            dependency_patterns: DEFAULT_DEPENDENCY_PATTERNS.iter().map(|s| s.to_string()).collect(),
            canvas: (640, 480),
        }
    }
}

const LOG_OUTPUT_BYTES: usize = 2048;

/// Loads the task's scene graph and raster.
pub fn load_artifact(task: &RepairTask, canvas: (u32, u32)) -> Result<(SceneGraph, Option<RasterImage>), String> {
    let a = &task.artifact;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()));
    let g = if let Some(p) = &a.ssg {
        SceneGraph::from_json(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?
    } else if let Some(p) = &a.source {
        let text = read(p)?;
        match p.extension().and_then(|e| e.to_str()) {
            Some("html" | "htm") => crate::html::html_to_ssg(&text).map_err(|e| format!("{}: {e}", p.display()))?,
            Some("mini") => crate::cfg::extract(&text, false).map_err(|e| format!("{}: {e}", p.display()))?,
            _ => return Err(format!("{}: unsupported artifact source", p.display())),
        }
    } else {
        SceneGraph::empty()
    };
    let raster = match &a.raster {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            Some(RasterImage::from_pgm(&bytes).map_err(|e| format!("{}: {e}", p.display()))?)
        }
        None if g.is_empty() => None,
        None => rasterize(&g, canvas.0, canvas.1).ok(),
    };
    Ok((g, raster))
}

fn snippets(hits: &[FileHit]) -> Vec<(String, String)> {
    hits.iter()
        .map(|h| {
            let body = h.lines.iter().map(|(n, l)| format!("{n:>4}| {l}")).collect::<Vec<_>>().join("\n");
            (h.path.clone(), body)
        })
        .collect()
}

fn render_snippets(items: &[(String, String)]) -> String {
    if items.is_empty() {
        return "(no matching files)".into();
    }
    items.iter().map(|(p, b)| format!("{p}\n{b}")).collect::<Vec<_>>().join("\n\n")
}

/// Runs Extract, Localize, Generate, Apply and Validate until the tests
/// pass or the round cap is reached, narrowing the artifact by
/// segmentation between rounds. The codebase root is never modified.
pub fn run_session(task: &RepairTask, backends: Backends<'_>, config: &SessionConfig) -> RepairSession {
    let mut s = RepairSession { task_id: task.id.clone(), round: 1, state: SessionState::Init, log: Vec::new() };
    let (mut graph, mut raster) = match load_artifact(task, config.canvas) {
        Ok(x) => x,
        Err(e) => {
            s.fail(e);
            return s;
        }
    };
    let timeout = Duration::from_secs_f64(task.timeout);
    let mut feedback: Option<String> = None;
    loop {
        s.enter(SessionState::Extracted);
        s.log.push(Event::Extract {
            nodes: graph.len(),
            edges: graph.edges().len(),
            raster: raster.as_ref().map(|r| (r.width(), r.height())),
        });

        let hits = match localize(&task.codebase_root, &task.issue_text, &graph, config.top_n) {
            Ok(h) => h,
            Err(e) => {
                s.fail(format!("localization failed: {e}"));
                return s;
            }
        };
        s.enter(SessionState::Localized);
        s.log.push(Event::Localize { files: hits.iter().map(|h| h.path.clone()).collect() });
        let snips = snippets(&hits);

        let patch = match generate(task, &graph, &snips, feedback.as_deref(), backends.patch, config, &mut s) {
            Ok(p) => p,
            Err(GenerateError::Model(e)) => {
                s.fail(format!("patch generation: {e}"));
                return s;
            }
            Err(GenerateError::Rejected(reason)) => Err(reason),
        };
        s.enter(SessionState::Generated);

        let validation = match patch {
            Ok(p) => match attempt(task, &p, timeout, backends.fallback, config, &mut s) {
                Ok(v) => v,
                Err(e) => {
                    s.fail(e);
                    return s;
                }
            },
            Err(reason) => {
                s.log.push(Event::PatchRejected { reason: reason.clone() });
                Validation::Fail { output: reason, exit_code: None, timed_out: false }
            }
        };
        let passed = validation.passed();
        s.enter(SessionState::Validated { passed });
        if passed {
            s.enter(SessionState::Done { resolved: true });
            return s;
        }
        if iteration_gate(s.round + 1, task.max_rounds) == Gate::Stop {
            s.enter(SessionState::Done { resolved: false });
            return s;
        }
        feedback = Some(tail(validation.output(), config.feedback_budget).to_string());

        match &raster {
            None => s.log.push(Event::SegmentationSkipped { reason: "no raster for this artifact".into() }),
            Some(img) => {
                let req = SegmentationRequest::new(img.clone(), task.issue_text.clone(), snips.clone());
                let key = scenario_key(Role::Segment, &task.id, s.round);
                s.log.push(Event::ModelCall { role: Role::Segment.as_str(), key: key.clone(), backend: backends.segment.id() });
                match propose_region(&req, backends.segment, &config.prompts.segmentation, &key) {
                    Ok(resp) => match crop(&graph, img, resp.bbox) {
                        Ok((g2, r2)) => {
                            s.log.push(Event::Segmentation {
                                bbox: resp.bbox,
                                reason: resp.reason,
                                kept_nodes: Some(g2.len()),
                                note: None,
                            });
                            graph = g2;
                            raster = Some(r2);
                        }
                        Err(e) => s.log.push(Event::Segmentation {
                            bbox: resp.bbox,
                            reason: resp.reason,
                            kept_nodes: None,
                            note: Some(format!("{e}; keeping the uncropped artifact")),
                        }),
                    },
                    Err(SegmentError::Model(e)) => {
                        s.fail(format!("segmentation: {e}"));
                        return s;
                    }
                    Err(e) => s.log.push(Event::SegmentationSkipped { reason: e.to_string() }),
                }
            }
        }
        s.round += 1;
    }
}

enum GenerateError {
    Model(ModelError),
    Rejected(String),
}

fn generate(
    task: &RepairTask,
    graph: &SceneGraph,
    snips: &[(String, String)],
    feedback: Option<&str>,
    backend: &dyn ModelBackend,
    config: &SessionConfig,
    s: &mut RepairSession,
) -> Result<Result<PatchCandidate, String>, GenerateError> {
    let artifact = if graph.is_empty() {
        "(no artifact)".to_string()
    } else {
        match crate::mermaid::serialize(graph) {
            Ok(doc) => doc.0,
            Err(e) => format!("(artifact could not be serialized: {e})"),
        }
    };
    let code = render_snippets(snips);
    let fb = feedback.unwrap_or("(first attempt)");
    let (system, user) = config
        .prompts
        .coding
        .render(&[("problem_statement", &task.issue_text), ("artifact", &artifact), ("code_snips", &code), ("feedback", fb)])
        .map_err(|e| GenerateError::Rejected(e.to_string()))?;
    let key = scenario_key(Role::Patch, &task.id, s.round);
    s.log.push(Event::ModelCall { role: Role::Patch.as_str(), key: key.clone(), backend: backend.id() });
    let reply = backend.complete(&ModelRequest::new(system, user, key)).map_err(GenerateError::Model)?;
    Ok(parse_patch(&reply.text).map_err(|e| format!("unusable patch: {e}")))
}

/// Applies `patch` to a fresh copy of the codebase and validates it,
/// falling back to a model-written script when tooling is missing.
fn attempt(
    task: &RepairTask,
    patch: &PatchCandidate,
    timeout: Duration,
    fallback: &dyn ModelBackend,
    config: &SessionConfig,
    s: &mut RepairSession,
) -> Result<Validation, String> {
    let work = tempfile::tempdir().map_err(|e| format!("cannot create work dir: {e}"))?;
    copy_tree(&task.codebase_root, work.path()).map_err(|e| format!("cannot copy codebase: {e}"))?;
    if let Err(e) = apply_patch(work.path(), patch) {
        let reason = format!("patch did not apply: {e}");
        s.log.push(Event::PatchRejected { reason: reason.clone() });
        return Ok(Validation::Fail { output: reason, exit_code: None, timed_out: false });
    }
    let mut files: Vec<String> = patch.edits.iter().map(|e| e.path.clone()).collect();
    files.dedup();
    s.log.push(Event::Patch { files });

    let v = validate(work.path(), &task.test_command, timeout);
    s.log.push(Event::Validation {
        passed: v.passed(),
        timed_out: matches!(v, Validation::Fail { timed_out: true, .. }),
        output: tail(v.output(), LOG_OUTPUT_BYTES).to_string(),
    });
    if v.passed() || !is_dependency_failure(&v, &config.dependency_patterns) {
        return Ok(v);
    }

    let failure = tail(v.output(), config.feedback_budget);
    let patch_text = patch.to_string();
    let (system, user) = config
        .prompts
        .fallback
        .render(&[("problem_statement", &task.issue_text), ("patch", &patch_text), ("failure", failure)])
        .map_err(|e| e.to_string())?;
    let key = scenario_key(Role::Fallback, &task.id, s.round);
    s.log.push(Event::ModelCall { role: Role::Fallback.as_str(), key: key.clone(), backend: fallback.id() });
    let reply = fallback.complete(&ModelRequest::new(system, user, key)).map_err(|e| format!("fallback: {e}"))?;
    let Some(script) = extract_script(&reply.text) else {
        s.log.push(Event::Error { message: "fallback reply has no sh/js/python code block".into() });
        return Ok(v);
    };
    let fv = run_script(work.path(), &script, timeout);
    s.log.push(Event::Fallback { passed: fv.passed(), script: script.language.file_name() });
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, SceneNode};
    use crate::model::MockBackend;

    const GOLDEN: &str = "<<<<<<< SEARCH app.sh\necho $((a - b))\n=======\necho $((a + b))\n>>>>>>> REPLACE\n";
    const WRONG: &str = "<<<<<<< SEARCH app.sh\necho $((a - b))\n=======\necho $((a - b))\n>>>>>>> REPLACE\n";

    fn fixture() -> (tempfile::TempDir, RepairTask) {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("code");
        std::fs::create_dir(&root).unwrap();
        std::fs::write(root.join("app.sh"), "a=$1\nb=$2\necho $((a - b))\n").unwrap();
        std::fs::write(root.join("test.sh"), "test \"$(sh app.sh 2 3)\" = 5 || { echo \"sum wrong\"; exit 1; }\n").unwrap();
        let mut b = GraphBuilder::new();
        b.add_node(SceneNode::new("n0", "div", "total").with_bbox(BoundingBox::new(0, 0, 100, 40).unwrap())).unwrap();
        b.add_node(SceneNode::new("n1", "span", "sum").with_bbox(BoundingBox::new(10, 10, 40, 20).unwrap())).unwrap();
        let g = b.build().unwrap();
        std::fs::write(dir.path().join("a.ssg.json"), g.to_json()).unwrap();
        let task = RepairTask {
            id: "t1".into(),
            codebase_root: root,
            issue_text: "The sum printed by app.sh is wrong".into(),
            artifact: Artifact { ssg: Some(dir.path().join("a.ssg.json")), ..Artifact::default() },
            test_command: vec!["sh".into(), "test.sh".into()],
            timeout: 10.0,
            max_rounds: 3,
        };
        (dir, task)
    }

    #[test]
    fn golden_patch_resolves_in_one_round() {
        let (_dir, task) = fixture();
        let mock = MockBackend::from_pairs([("patch/t1/1", GOLDEN)]);
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert!(s.resolved(), "{:#?}", s.log);
        assert_eq!(s.round, 1);
        assert_eq!(s.generate_calls(), 1);
        assert_eq!(s.segmentation_events(), 0);
        let original = std::fs::read_to_string(task.codebase_root.join("app.sh")).unwrap();
        assert!(original.contains("a - b"));
    }

    #[test]
    fn wrong_then_right_segments_once() {
        let (_dir, task) = fixture();
        let mock = MockBackend::from_pairs([
            ("patch/t1/1", WRONG),
            ("segment/t1/1", "The total region.\n<result>[0, 0, 320, 240]</result>"),
            ("patch/t1/2", GOLDEN),
        ]);
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert!(s.resolved(), "{:#?}", s.log);
        assert_eq!(s.round, 2);
        assert_eq!(s.generate_calls(), 2);
        assert_eq!(s.segmentation_events(), 1);
        let validation_fail = s.log.iter().any(|e| matches!(e, Event::Validation { passed: false, output, .. } if output.contains("sum wrong")));
        assert!(validation_fail);
    }

    #[test]
    fn always_wrong_stops_at_the_cap() {
        let (_dir, task) = fixture();
        let mock = MockBackend::from_pairs([("patch/t1/*", WRONG), ("segment/t1/*", "<result>[0,0,64,64]</result>")]);
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert!(!s.resolved());
        assert_eq!(s.round, 3);
        assert_eq!(s.generate_calls(), 3);
        assert_eq!(s.segmentation_events(), 2);
        assert_eq!(s.outcome().iterations, 3);
    }

    #[test]
    fn malformed_patch_is_a_failed_round() {
        let (_dir, mut task) = fixture();
        task.max_rounds = 2;
        let mock = MockBackend::from_pairs([("patch/t1/1", "no blocks here"), ("patch/t1/2", GOLDEN)])
            .with_default(Some("<result>[0,0,100,100]</result>".into()));
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert!(s.resolved());
        assert!(s.log.iter().any(|e| matches!(e, Event::PatchRejected { .. })));
    }

    #[test]
    fn scenario_miss_ends_unresolved() {
        let (_dir, task) = fixture();
        let mock = MockBackend::from_pairs([]);
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert_eq!(s.state, SessionState::Done { resolved: false });
        assert!(matches!(s.log.last(), Some(Event::State { to: SessionState::Done { resolved: false }, .. })));
    }

    #[test]
    fn dependency_failure_runs_fallback_script() {
        let (_dir, mut task) = fixture();
        std::fs::write(task.codebase_root.join("test.sh"), "no_such_runner_xyz app.sh\n").unwrap();
        task.max_rounds = 1;
        let script = "```sh\ntest \"$(sh app.sh 2 3)\" = 5\n```";
        let mock = MockBackend::from_pairs([("patch/t1/1", GOLDEN), ("fallback/t1/1", script)]);
        let s = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert!(s.used_fallback());
        assert!(s.resolved(), "{:#?}", s.log);
    }

    #[test]
    fn logs_are_reproducible() {
        let (_dir, task) = fixture();
        let mock = MockBackend::from_pairs([("patch/t1/*", WRONG), ("segment/t1/*", "<result>[0,0,64,64]</result>")]);
        let a = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        let b = run_session(&task, Backends::single(&mock), &SessionConfig::default());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn manifest_paths_resolve_against_its_directory() {
        let (dir, _) = fixture();
        let manifest = r#"[{"id":"m","codebase_root":"code","issue_text":"x","test_command":["sh","test.sh"]}]"#;
        std::fs::write(dir.path().join("manifest.json"), manifest).unwrap();
        let tasks = load_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(tasks[0].codebase_root, dir.path().join("code"));
        assert_eq!(tasks[0].max_rounds, 3);
        let bad = r#"[{"id":"m","codebase_root":"nowhere","issue_text":"x","test_command":["sh"]}]"#;
        std::fs::write(dir.path().join("bad.json"), bad).unwrap();
        assert!(matches!(load_manifest(&dir.path().join("bad.json")), Err(TaskError::Invalid { .. })));
    }
}
