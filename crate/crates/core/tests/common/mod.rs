//! Random inputs shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng;
use ssg::graph::{BoundingBox, GraphBuilder, RelationType, SceneEdge, SceneGraph, SceneNode};
use ssg::metrics::RasterImage;

/// Characters chosen to stress escaping: Mermaid delimiters, entity
/// starts, separators, controls and non-ASCII text.
const TRICKY: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '7', ' ', '/', '|', '#', '@', '"', ';', '[', ']', '(', ')', '{', '}', '<', '>', '-', '=',
    '.', ',', ':', '&', '\n', '\t', '\r', 'é', 'ß', '中', '→', '\u{1F600}', '\'', '\\', '%',
];

pub fn tricky_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| TRICKY[rng.gen_range(0..TRICKY.len())]).collect()
}

fn non_empty<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let mut s = tricky_text(rng, max_len);
    if s.is_empty() {
        s.push('k');
    }
    s
}

pub fn random_bbox<R: Rng>(rng: &mut R) -> BoundingBox {
    BoundingBox::new(rng.gen_range(0..2000), rng.gen_range(0..2000), rng.gen_range(1..500), rng.gen_range(1..500))
        .expect("positive size")
}

/// A valid graph of `1..=max_nodes` nodes with escaping-hostile text, a
/// random hierarchy forest and labelled or unlabelled flow edges.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> SceneGraph {
    let n = rng.gen_range(1..=max_nodes);
    let ids: Vec<String> = (0..n).map(|i| format!("{}{i}", tricky_text(rng, 4))).collect();
    let mut b = GraphBuilder::new();
    if rng.gen_bool(0.3) {
        b.meta("source", tricky_text(rng, 6));
    }
    for id in &ids {
        let mut node = SceneNode::new(id.clone(), non_empty(rng, 5), tricky_text(rng, 24));
        if rng.gen_bool(0.5) {
            node = node.with_bbox(random_bbox(rng));
        }
        b.add_node(node).expect("ids are unique");
    }
    for i in 1..n {
        if rng.gen_bool(0.5) {
            let parent = rng.gen_range(0..i);
            b.add_edge(SceneEdge::new(ids[parent].clone(), ids[i].clone(), RelationType::Hierarchy)).expect("forest");
        }
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let relation = if rng.gen_bool(0.5) { RelationType::ControlFlow } else { RelationType::DataFlow };
        let mut e = SceneEdge::new(ids[rng.gen_range(0..n)].clone(), ids[rng.gen_range(0..n)].clone(), relation);
        if rng.gen_bool(0.4) {
            e = e.labeled(non_empty(rng, 6));
        }
        b.add_edge_if_absent(e).expect("endpoints exist");
    }
    b.build().expect("construction keeps the graph valid")
}

pub fn random_raster<R: Rng>(rng: &mut R, width: u32, height: u32) -> RasterImage {
    let pixels = (0..width * height).map(|_| rng.gen()).collect();
    RasterImage::new(width, height, pixels).expect("sizes match")
}

/// Stable digest of every file under `root` (paths and contents).
pub fn tree_hash(root: &std::path::Path) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.expect("readable tree");
        let rel = e.path().strip_prefix(root).expect("under root");
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        if e.file_type().is_file() {
            h.update(std::fs::read(e.path()).expect("readable file"));
        }
        h.update([1]);
    }
    format!("{:x}", h.finalize())
}
