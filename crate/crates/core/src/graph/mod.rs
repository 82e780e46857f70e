//! The semantic scene graph: typed nodes joined by typed directed edges.
//!
//! A [`SceneGraph`] is immutable once built. Construct one with
//! [`GraphBuilder`], which rejects duplicate node ids, duplicate edges and
//! dangling endpoints at insertion time and checks the hierarchy-forest rule
//! on [`GraphBuilder::build`]. Graphs that come from outside (JSON files,
//! hand-made fixtures) can be assembled unchecked with
//! [`SceneGraph::from_parts`] and inspected with [`SceneGraph::validate`].

mod json;
mod ops;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ops::SubgraphError;
pub use validate::Violation;

/// Kind of relationship carried by an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    ControlFlow,
    DataFlow,
    Hierarchy,
}

impl RelationType {
    pub const ALL: [RelationType; 3] = [
        RelationType::ControlFlow,
        RelationType::DataFlow,
        RelationType::Hierarchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::ControlFlow => "control_flow",
            RelationType::DataFlow => "data_flow",
            RelationType::Hierarchy => "hierarchy",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned pixel rectangle, `[x, y, w, h]` with the origin at the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bounding box must have positive width and height, got {w}x{h}")]
pub struct EmptyBox {
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, EmptyBox> {
        if w == 0 || h == 0 {
            return Err(EmptyBox { w, h });
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    /// Center in doubled coordinates, which keeps odd sizes exact.
    pub fn center2(&self) -> (u64, u64) {
        (2 * self.x as u64 + self.w as u64, 2 * self.y as u64 + self.h as u64)
    }

    /// True if the center of `other` falls inside `self` (half-open).
    pub fn contains_center_of(&self, other: &BoundingBox) -> bool {
        let (cx, cy) = other.center2();
        2 * self.x as u64 <= cx && cx < 2 * self.right() && 2 * self.y as u64 <= cy && cy < 2 * self.bottom()
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width as u64 && self.bottom() <= height as u64
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[u32; 4]>::deserialize(d)?;
        BoundingBox::new(x, y, w, h).map_err(serde::de::Error::custom)
    }
}

/// A visual or structural element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SceneNode {
    pub id: String,
    pub kind: String,
    pub content: String,
    pub bbox: Option<BoundingBox>,
}

impl SceneNode {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, content: impl Into<String>) -> Self {
        SceneNode {
            id: id.into(),
            kind: kind.into(),
            content: content.into(),
            bbox: None,
        }
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Self {
        self.bbox = Some(bbox);
        self
    }
}

/// A directed, typed relation between two nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SceneEdge {
    pub src: String,
    pub dst: String,
    pub relation: RelationType,
    pub label: Option<String>,
}

impl SceneEdge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, relation: RelationType) -> Self {
        SceneEdge {
            src: src.into(),
            dst: dst.into(),
            relation,
            label: None,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn key(&self) -> (&str, &str, RelationType, Option<&str>) {
        (&self.src, &self.dst, self.relation, self.label.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node id must be non-empty")]
    EmptyId,
    #[error("node {0} has an empty kind")]
    EmptyKind(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("edge references unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate edge {src} -> {dst} ({relation})")]
    DuplicateEdge {
        src: String,
        dst: String,
        relation: RelationType,
    },
    #[error("graph is invalid: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

pub(crate) fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// The central intermediate representation: nodes, edges and string metadata.
#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    nodes: Vec<SceneNode>,
    edges: Vec<SceneEdge>,
    meta: BTreeMap<String, String>,
    index: HashMap<String, usize>,
}

impl PartialEq for SceneGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.meta == other.meta
    }
}

impl SceneGraph {
    pub fn empty() -> Self {
        SceneGraph::default()
    }

    /// Assemble a graph without checking any invariant. Use
    /// [`SceneGraph::validate`] to find out what, if anything, is wrong.
    pub fn from_parts(
        nodes: Vec<SceneNode>,
        edges: Vec<SceneEdge>,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        SceneGraph {
            nodes,
            edges,
            meta,
            index,
        }
    }

    pub fn nodes(&self) -> &[SceneNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[SceneEdge] {
        &self.edges
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges_of(&self, relation: RelationType) -> impl Iterator<Item = &SceneEdge> {
        self.edges.iter().filter(move |e| e.relation == relation)
    }

    pub fn has_edge(&self, edge: &SceneEdge) -> bool {
        self.edges.iter().any(|e| e.key() == edge.key())
    }

    /// Hierarchy parent of `id`, if any. Only meaningful on valid graphs.
    pub fn parent(&self, id: &str) -> Option<&str> {
        self.edges_of(RelationType::Hierarchy)
            .find(|e| e.dst == id)
            .map(|e| e.src.as_str())
    }

    /// Returns every invariant violation; empty means the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate::violations(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Re-open the graph for extension. The builder starts out holding
    /// every node and edge of `self`.
    pub fn into_builder(self) -> GraphBuilder {
        let edge_keys = self
            .edges
            .iter()
            .map(|e| (e.src.clone(), e.dst.clone(), e.relation, e.label.clone()))
            .collect();
        GraphBuilder { graph: self, edge_keys }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Replace node bounding boxes using `f`; ids, edges and meta are untouched.
    pub fn map_bboxes(mut self, mut f: impl FnMut(&SceneNode) -> Option<BoundingBox>) -> Self {
        for n in &mut self.nodes {
            n.bbox = f(n);
        }
        self
    }
}

type EdgeKey = (String, String, RelationType, Option<String>);

/// Single-threaded incremental constructor for [`SceneGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: SceneGraph,
    edge_keys: HashSet<EdgeKey>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder::default()
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.graph.meta.insert(key.into(), value.into());
        self
    }

    pub fn add_node(&mut self, node: SceneNode) -> Result<&mut Self, GraphError> {
        if node.id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        if node.kind.is_empty() {
            return Err(GraphError::EmptyKind(node.id));
        }
        if self.graph.index.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.graph.index.insert(node.id.clone(), self.graph.nodes.len());
        self.graph.nodes.push(node);
        Ok(self)
    }

    pub fn add_edge(&mut self, edge: SceneEdge) -> Result<&mut Self, GraphError> {
        for end in [&edge.src, &edge.dst] {
            if !self.graph.index.contains_key(end) {
                return Err(GraphError::UnknownNode(end.clone()));
            }
        }
        let key = (edge.src.clone(), edge.dst.clone(), edge.relation, edge.label.clone());
        if !self.edge_keys.insert(key) {
            return Err(GraphError::DuplicateEdge {
                src: edge.src,
                dst: edge.dst,
                relation: edge.relation,
            });
        }
        self.graph.edges.push(edge);
        Ok(self)
    }

    /// Adds the edge unless an identical one is already present. Returns
    /// whether it was inserted.
    pub fn add_edge_if_absent(&mut self, edge: SceneEdge) -> Result<bool, GraphError> {
        match self.add_edge(edge) {
            Ok(_) => Ok(true),
            Err(GraphError::DuplicateEdge { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.graph.contains(id)
    }

    /// Finish, checking the remaining whole-graph invariants.
    pub fn build(self) -> Result<SceneGraph, GraphError> {
        let violations = self.graph.validate();
        if violations.is_empty() {
            Ok(self.graph)
        } else {
            Err(GraphError::Invalid(violations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_rejects_duplicates_and_dangling_edges() {
        let mut b = GraphBuilder::new();
        b.add_node(SceneNode::new("A", "div", "")).unwrap();
        assert_eq!(
            b.add_node(SceneNode::new("A", "p", "")).unwrap_err(),
            GraphError::DuplicateNode("A".into())
        );
        assert_eq!(
            b.add_edge(SceneEdge::new("A", "Z", RelationType::ControlFlow)).unwrap_err(),
            GraphError::UnknownNode("Z".into())
        );
        b.add_node(SceneNode::new("B", "p", "")).unwrap();
        b.add_edge(SceneEdge::new("A", "B", RelationType::Hierarchy)).unwrap();
        assert!(matches!(
            b.add_edge(SceneEdge::new("A", "B", RelationType::Hierarchy)),
            Err(GraphError::DuplicateEdge { .. })
        ));
        // Same endpoints, different label: distinct edge.
        b.add_edge(SceneEdge::new("A", "B", RelationType::Hierarchy).labeled("x")).unwrap();
        assert_eq!(b.build().unwrap().edges().len(), 2);
    }

    #[test]
    fn empty_id_and_kind_rejected() {
        let mut b = GraphBuilder::new();
        assert_eq!(b.add_node(SceneNode::new("", "div", "")).unwrap_err(), GraphError::EmptyId);
        assert_eq!(
            b.add_node(SceneNode::new("A", "", "")).unwrap_err(),
            GraphError::EmptyKind("A".into())
        );
    }

    #[test]
    fn build_rejects_hierarchy_cycle() {
        let mut b = GraphBuilder::new();
        b.add_node(SceneNode::new("A", "div", "")).unwrap();
        b.add_node(SceneNode::new("B", "div", "")).unwrap();
        b.add_edge(SceneEdge::new("A", "B", RelationType::Hierarchy)).unwrap();
        b.add_edge(SceneEdge::new("B", "A", RelationType::Hierarchy)).unwrap();
        assert!(matches!(b.build(), Err(GraphError::Invalid(_))));
    }

    #[test]
    fn bbox_rejects_zero_extent() {
        assert!(BoundingBox::new(0, 0, 0, 5).is_err());
        let b = BoundingBox::new(10, 20, 100, 50).unwrap();
        assert_eq!(b.to_string(), "[10, 20, 100, 50]");
        assert!(b.fits_within(110, 70));
        assert!(!b.fits_within(109, 70));
    }
}
