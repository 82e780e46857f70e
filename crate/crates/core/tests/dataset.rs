use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ssg::dataset::{seed_bugs, DatasetError};

fn templates() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/templates")
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(root).unwrap().display().to_string();
            out.push((rel, std::fs::read(e.path()).unwrap()));
        }
    }
    out
}

#[test]
fn twenty_tasks_use_at_least_four_operators() {
    let out = tempfile::tempdir().unwrap();
    let set = seed_bugs(&templates(), out.path(), 20, 7).unwrap();
    assert_eq!(set.bugs.len(), 20);
    let ops: BTreeSet<_> = set.bugs.iter().map(|b| b.mutation.op).collect();
    assert!(ops.len() >= 4, "operators used: {ops:?}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("manifest.json")).unwrap()).unwrap();
    let listed = manifest.as_array().unwrap().iter().map(|t| t["mutation"]["op"].as_str().unwrap().to_string()).collect::<BTreeSet<String>>();
    assert_eq!(listed.len(), ops.len());
    let tasks = ssg::repair::load_manifest(&out.path().join("manifest.json")).unwrap();
    assert_eq!(tasks.len(), 20);
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    seed_bugs(&templates(), a.path(), 10, 3).unwrap();
    seed_bugs(&templates(), b.path(), 10, 3).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
}

#[test]
fn broken_template_is_named() {
    let dir = tempfile::tempdir().unwrap();
    ssg::repair::copy_tree(&templates().join("cart"), &dir.path().join("cart")).unwrap();
    std::fs::write(dir.path().join("cart/test.sh"), "exit 1\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    match seed_bugs(dir.path(), out.path(), 1, 0) {
        Err(DatasetError::Template { name, .. }) => assert_eq!(name, "cart"),
        other => panic!("expected a template error, got {other:?}"),
    }
}
