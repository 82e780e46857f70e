use std::collections::{BTreeMap, HashSet};

use super::{BoundingBox, RelationType, SceneEdge, SceneGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot keep unknown node {0}")]
pub struct SubgraphError(pub String);

impl SceneGraph {
    /// Nodes in `keep` and exactly the edges with both endpoints in `keep`.
    /// Node and edge order follow `self`. The result's meta gains a
    /// `subgraph_of` entry.
    pub fn induced_subgraph<'a, I>(&self, keep: I) -> Result<SceneGraph, SubgraphError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut wanted: HashSet<&str> = HashSet::new();
        for id in keep {
            if !self.contains(id) {
                return Err(SubgraphError(id.to_string()));
            }
            wanted.insert(id);
        }
        let nodes = self
            .nodes
            .iter()
            .filter(|n| wanted.contains(n.id.as_str()))
            .cloned()
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| wanted.contains(e.src.as_str()) && wanted.contains(e.dst.as_str()))
            .cloned()
            .collect();
        let mut meta = self.meta.clone();
        let parent = self
            .meta
            .get("source")
            .cloned()
            .unwrap_or_else(|| format!("graph of {} nodes", self.nodes.len()));
        meta.insert("subgraph_of".into(), parent);
        Ok(SceneGraph::from_parts(nodes, edges, meta))
    }

    /// Structural equality up to renaming of node ids.
    ///
    /// Nodes are compared by (kind, content, bbox); colours are refined
    /// jointly over both graphs by neighbourhood (edge relation, label and
    /// neighbour colour) until the partition stops changing, then the colour
    /// multisets and coloured edge multisets are compared. This never
    /// rejects a truly isomorphic pair; it can in principle accept a
    /// non-isomorphic pair whose nodes are indistinguishable by refinement,
    /// which node content rules out for the graphs produced here.
    pub fn isomorphic(&self, other: &SceneGraph) -> bool {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        let (Some(a), Some(b)) = (Indexed::new(self), Indexed::new(other)) else {
            // Dangling edges: fall back to plain equality.
            return self == other;
        };

        let mut table: BTreeMap<InitialSig, usize> = BTreeMap::new();
        for g in [&a, &b] {
            for sig in &g.initial {
                let next = table.len();
                table.entry(sig.clone()).or_insert(next);
            }
        }
        let mut ca: Vec<usize> = a.initial.iter().map(|s| table[s]).collect();
        let mut cb: Vec<usize> = b.initial.iter().map(|s| table[s]).collect();
        let mut classes = table.len();

        loop {
            if !same_multiset(&ca, &cb) {
                return false;
            }
            let sa = a.refine(&ca);
            let sb = b.refine(&cb);
            let mut t: BTreeMap<&RefinedSig, usize> = BTreeMap::new();
            for s in sa.iter().chain(sb.iter()) {
                let next = t.len();
                t.entry(s).or_insert(next);
            }
            let na: Vec<usize> = sa.iter().map(|s| t[s]).collect();
            let nb: Vec<usize> = sb.iter().map(|s| t[s]).collect();
            let stable = t.len() == classes;
            classes = t.len();
            ca = na;
            cb = nb;
            if stable {
                break;
            }
        }
        same_multiset(&ca, &cb) && a.colored_edges(&ca) == b.colored_edges(&cb)
    }
}

type InitialSig = (String, String, Option<BoundingBox>);
type RefinedSig = (usize, Vec<(RelationType, Option<String>, usize)>, Vec<(RelationType, Option<String>, usize)>);

struct Indexed {
    initial: Vec<InitialSig>,
    edges: Vec<(usize, usize, RelationType, Option<String>)>,
}

impl Indexed {
    fn new(g: &SceneGraph) -> Option<Indexed> {
        let edges = g
            .edges
            .iter()
            .map(|e: &SceneEdge| Some((g.position(&e.src)?, g.position(&e.dst)?, e.relation, e.label.clone())))
            .collect::<Option<Vec<_>>>()?;
        Some(Indexed {
            initial: g
                .nodes
                .iter()
                .map(|n| (n.kind.clone(), n.content.clone(), n.bbox))
                .collect(),
            edges,
        })
    }

    fn refine(&self, colors: &[usize]) -> Vec<RefinedSig> {
        let mut out: Vec<RefinedSig> = colors.iter().map(|&c| (c, Vec::new(), Vec::new())).collect();
        for (s, d, r, l) in &self.edges {
            out[*s].1.push((*r, l.clone(), colors[*d]));
            out[*d].2.push((*r, l.clone(), colors[*s]));
        }
        for sig in &mut out {
            sig.1.sort();
            sig.2.sort();
        }
        out
    }

    fn colored_edges(&self, colors: &[usize]) -> Vec<(usize, usize, RelationType, Option<String>)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .map(|(s, d, r, l)| (colors[*s], colors[*d], *r, l.clone()))
            .collect();
        v.sort();
        v
    }
}

fn same_multiset(a: &[usize], b: &[usize]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

#[cfg(test)]
mod tests {
    use super::super::{GraphBuilder, SceneNode};
    use super::*;

    fn chain() -> SceneGraph {
        let mut b = GraphBuilder::new();
        for id in ["A", "B", "C"] {
            b.add_node(SceneNode::new(id, "block", format!("stmt {id}"))).unwrap();
        }
        b.add_edge(SceneEdge::new("A", "B", RelationType::ControlFlow)).unwrap();
        b.add_edge(SceneEdge::new("B", "C", RelationType::ControlFlow)).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        let g = chain();
        let s = g.induced_subgraph(["A", "B"]).unwrap();
        let ids: Vec<_> = s.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["A", "B"]);
        assert_eq!(s.edges(), &[SceneEdge::new("A", "B", RelationType::ControlFlow)]);
        assert!(s.meta().contains_key("subgraph_of"));
    }

    #[test]
    fn induced_subgraph_identity_and_empty() {
        let g = chain();
        let all = g.induced_subgraph(g.nodes().iter().map(|n| n.id.as_str())).unwrap();
        assert_eq!(all.nodes(), g.nodes());
        assert_eq!(all.edges(), g.edges());
        let none = g.induced_subgraph([]).unwrap();
        assert!(none.is_empty());
        assert!(none.edges().is_empty());
    }

    #[test]
    fn induced_subgraph_unknown_id() {
        assert_eq!(chain().induced_subgraph(["A", "Q"]).unwrap_err(), SubgraphError("Q".into()));
    }

    #[test]
    fn isomorphism_basics() {
        let g = chain();
        assert!(g.isomorphic(&g));
        let flipped = SceneGraph::from_parts(
            g.nodes().to_vec(),
            vec![
                SceneEdge::new("A", "B", RelationType::DataFlow),
                SceneEdge::new("B", "C", RelationType::ControlFlow),
            ],
            Default::default(),
        );
        assert!(!g.isomorphic(&flipped));
    }

    #[test]
    fn regular_graphs_are_beyond_colour_refinement() {
        // A 4-cycle and two 2-cycles over identical nodes.
        let node = |id: &str| SceneNode::new(id, "block", "x");
        let nodes = vec![node("a"), node("b"), node("c"), node("d")];
        let e = |s: &str, d: &str| SceneEdge::new(s, d, RelationType::ControlFlow);
        let ring = SceneGraph::from_parts(
            nodes.clone(),
            vec![e("a", "b"), e("b", "c"), e("c", "d"), e("d", "a")],
            Default::default(),
        );
        let pairs = SceneGraph::from_parts(
            nodes,
            vec![e("a", "b"), e("b", "a"), e("c", "d"), e("d", "c")],
            Default::default(),
        );
        // Colour refinement cannot separate these regular graphs; this
        // documents the known limit rather than hiding it.
        assert!(ring.isomorphic(&pairs));
    }
}
