//! Canonical on-disk JSON form. Arrays are sorted so output is byte-stable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, RelationType, SceneEdge, SceneGraph, SceneNode};

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: String,
    kind: String,
    content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<BoundingBox>,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    src: String,
    dst: String,
    relation: RelationType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<NodeJson>,
    edges: Vec<EdgeJson>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

impl Serialize for SceneGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut nodes: Vec<NodeJson> = self
            .nodes
            .iter()
            .map(|n| NodeJson {
                id: n.id.clone(),
                kind: n.kind.clone(),
                content: n.content.clone(),
                bbox: n.bbox,
            })
            .collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut edges: Vec<&SceneEdge> = self.edges.iter().collect();
        edges.sort_by(|a, b| a.key().cmp(&b.key()));
        GraphJson {
            nodes,
            edges: edges
                .into_iter()
                .map(|e| EdgeJson {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    relation: e.relation,
                    label: e.label.clone(),
                })
                .collect(),
            meta: self.meta.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SceneGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        Ok(SceneGraph::from_parts(
            raw.nodes
                .into_iter()
                .map(|n| SceneNode {
                    id: n.id,
                    kind: n.kind,
                    content: n.content,
                    bbox: n.bbox,
                })
                .collect(),
            raw.edges
                .into_iter()
                .map(|e| SceneEdge {
                    src: e.src,
                    dst: e.dst,
                    relation: e.relation,
                    label: e.label,
                })
                .collect(),
            raw.meta,
        ))
    }
}

impl SceneGraph {
    /// Pretty-printed canonical JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene graph serializes");
        s.push('\n');
        s
    }

    /// Parses JSON without validating; call [`SceneGraph::validate`] after.
    pub fn from_json(text: &str) -> serde_json::Result<SceneGraph> {
        serde_json::from_str(text)
    }
}
