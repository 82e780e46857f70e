//! Iterative program repair driven by a model backend.
//!
//! A session localizes likely files from the issue text and the scene
//! graph, asks the model for SEARCH/REPLACE edits, applies them to a scratch
//! copy of the codebase and runs the task's tests. Failed rounds feed their
//! test output back to the next prompt, and between rounds the model may
//! narrow the artifact to a region of interest.

mod localize;
mod patch;
mod session;
mod validate;

pub use localize::{discover_files, localize, query_terms, rank, FileHit, DEFAULT_TOP_N};
pub use patch::{
    apply_patch, is_safe_relative, parse_patch, ApplyError, Edit, PatchCandidate, PatchFormatError, DIVIDER,
    REPLACE_MARK, SEARCH_MARK,
};
pub use session::{
    load_artifact, load_manifest, run_session, Artifact, Backends, Event, RepairSession, RepairTask, SessionConfig,
    SessionState, TaskError,
};
pub use validate::{
    copy_tree, extract_script, is_dependency_failure, run_command, run_script, tail, validate, Script,
    ScriptLanguage, Validation, DEFAULT_DEPENDENCY_PATTERNS, TIMEOUT_MARKER,
};
