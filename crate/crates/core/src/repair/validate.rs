//! Running test commands in a throwaway copy of the codebase.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Serialize;

/// Marker placed in the output of a run that hit its time limit.
pub const TIMEOUT_MARKER: &str = "timeout";

/// Output patterns that mean the test suite could not even start.
pub const DEFAULT_DEPENDENCY_PATTERNS: [&str; 4] =
    ["ERR_MODULE_NOT_FOUND", "ModuleNotFoundError", "command not found", ": not found"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Validation {
    Pass { output: String },
    Fail { output: String, exit_code: Option<i32>, timed_out: bool },
}

impl Validation {
    pub fn passed(&self) -> bool {
        matches!(self, Validation::Pass { .. })
    }

    pub fn output(&self) -> &str {
        match self {
            Validation::Pass { output } | Validation::Fail { output, .. } => output,
        }
    }
}

/// Recursively copies `src` into the existing directory `dst`.
pub fn copy_tree(src: &Path, dst: &Path) -> std::io::Result<()> {
    for entry in walkdir::WalkDir::new(src).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under src");
        let target = dst.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            std::fs::create_dir_all(&target)?;
        } else if ft.is_symlink() {
            std::os::unix::fs::symlink(std::fs::read_link(entry.path())?, &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Runs `argv` in `dir`, killing its whole process group after `timeout`.
/// stdout and stderr are captured into one string (stdout first).
pub fn run_command(dir: &Path, argv: &[String], timeout: Duration) -> Validation {
    let Some((program, args)) = argv.split_first() else {
        return Validation::Fail { output: "empty test command".into(), exit_code: None, timed_out: false };
    };
    let spawned = Command::new(program)
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => {
            let output = format!("failed to start {program}: {e}");
            return Validation::Fail { output, exit_code: None, timed_out: false };
        }
    };
    let pipe = |mut r: Box<dyn Read + Send>| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = pipe(Box::new(child.stdout.take().expect("piped")));
    let err = pipe(Box::new(child.stderr.take().expect("piped")));
    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if started.elapsed() >= timeout => break None,
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(_) => break None,
        }
    };
    if status.is_none() {
        // SAFETY: kill(2) has no memory-safety preconditions; the negative
        // pid addresses the group created by `process_group(0)` above.
        unsafe {
            libc::kill(-(child.id() as i32), libc::SIGKILL);
        }
        let _ = child.wait();
    }
    let mut output = out.join().unwrap_or_default();
    output.push_str(&err.join().unwrap_or_default());
    match status {
        Some(s) if s.success() => Validation::Pass { output },
        Some(s) => Validation::Fail { output, exit_code: s.code(), timed_out: false },
        None => {
            output.push_str(&format!("\n{TIMEOUT_MARKER}: no result after {:.1}s\n", timeout.as_secs_f64()));
            Validation::Fail { output, exit_code: None, timed_out: true }
        }
    }
}

/// Copies `root` to a fresh scratch directory and runs the tests there.
pub fn validate(root: &Path, test_command: &[String], timeout: Duration) -> Validation {
    let scratch = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Validation::Fail { output: format!("cannot create scratch dir: {e}"), exit_code: None, timed_out: false },
    };
    if let Err(e) = copy_tree(root, scratch.path()) {
        return Validation::Fail { output: format!("cannot copy codebase: {e}"), exit_code: None, timed_out: false };
    }
    run_command(scratch.path(), test_command, timeout)
}

/// Whether a failed run looks like missing tooling rather than a real test failure.
pub fn is_dependency_failure(v: &Validation, patterns: &[String]) -> bool {
    match v {
        Validation::Fail { output, timed_out: false, .. } => patterns.iter().any(|p| output.contains(p.as_str())),
        _ => false,
    }
}

/// A script pulled out of a fenced code block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub language: ScriptLanguage,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptLanguage {
    Shell,
    JavaScript,
    Python,
}

impl ScriptLanguage {
    fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "sh" | "bash" | "shell" => Some(ScriptLanguage::Shell),
            "js" | "javascript" | "node" => Some(ScriptLanguage::JavaScript),
            "py" | "python" | "python3" => Some(ScriptLanguage::Python),
            _ => None,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ScriptLanguage::Shell => "test_fix.sh",
            ScriptLanguage::JavaScript => "test_fix.js",
            ScriptLanguage::Python => "test_fix.py",
        }
    }

    pub fn interpreter(self) -> &'static str {
        match self {
            ScriptLanguage::Shell => "sh",
            ScriptLanguage::JavaScript => "node",
            ScriptLanguage::Python => "python3",
        }
    }
}

/// First fenced block tagged `sh`, `js` or `python` (or an alias).
pub fn extract_script(text: &str) -> Option<Script> {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some(tag) = line.trim_start().strip_prefix("```") else { continue };
        let Some(language) = ScriptLanguage::from_tag(tag) else { continue };
        let body: Vec<&str> = lines.by_ref().take_while(|l| l.trim_start() != "```").collect();
        return Some(Script { language, body: body.join("\n") + "\n" });
    }
    None
}

/// Writes `script` into a scratch copy of `root` and runs it there.
pub fn run_script(root: &Path, script: &Script, timeout: Duration) -> Validation {
    let scratch = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Validation::Fail { output: format!("cannot create scratch dir: {e}"), exit_code: None, timed_out: false },
    };
    if let Err(e) = copy_tree(root, scratch.path()) {
        return Validation::Fail { output: format!("cannot copy codebase: {e}"), exit_code: None, timed_out: false };
    }
    let name = script.language.file_name();
    if let Err(e) = std::fs::write(scratch.path().join(name), &script.body) {
        return Validation::Fail { output: format!("cannot write {name}: {e}"), exit_code: None, timed_out: false };
    }
    run_command(scratch.path(), &[script.language.interpreter().to_string(), name.to_string()], timeout)
}

/// Keeps at most `budget` bytes of `text`, preferring the end.
pub fn tail(text: &str, budget: usize) -> &str {
    if text.len() <= budget {
        return text;
    }
    let mut start = text.len() - budget;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}
