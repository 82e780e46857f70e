use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use super::{RelationType, SceneGraph};

/// One broken invariant, reported as data rather than as a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId { position: usize },
    EmptyKind { id: String },
    DuplicateNode { id: String },
    UnknownEndpoint { id: String },
    DuplicateEdge { src: String, dst: String, relation: RelationType, label: Option<String> },
    MultipleParents { id: String, parents: Vec<String> },
    /// Node ids along the cycle, rotated to start at the smallest id.
    HierarchyCycle { path: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId { position } => write!(f, "node at position {position} has an empty id"),
            Violation::EmptyKind { id } => write!(f, "node {id} has an empty kind"),
            Violation::DuplicateNode { id } => write!(f, "duplicate node id {id}"),
            Violation::UnknownEndpoint { id } => write!(f, "edge references unknown node {id}"),
            Violation::DuplicateEdge { src, dst, relation, label } => {
                write!(f, "duplicate edge {src} -> {dst} ({relation}")?;
                if let Some(l) = label {
                    write!(f, ", label {l:?}")?;
                }
                f.write_str(")")
            }
            Violation::MultipleParents { id, parents } => {
                write!(f, "node {id} has multiple hierarchy parents: {}", parents.join(","))
            }
            Violation::HierarchyCycle { path } => write!(f, "hierarchy cycle: {}", path.join(",")),
        }
    }
}

pub(super) fn violations(g: &SceneGraph) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for (position, n) in g.nodes.iter().enumerate() {
        if n.id.is_empty() {
            out.push(Violation::EmptyId { position });
        }
        if n.kind.is_empty() {
            out.push(Violation::EmptyKind { id: n.id.clone() });
        }
        if !seen.insert(n.id.as_str()) {
            out.push(Violation::DuplicateNode { id: n.id.clone() });
        }
    }

    let mut reported_unknown = HashSet::new();
    let mut edge_keys = HashSet::new();
    for e in &g.edges {
        for end in [&e.src, &e.dst] {
            if !seen.contains(end.as_str()) && reported_unknown.insert(end.as_str()) {
                out.push(Violation::UnknownEndpoint { id: end.clone() });
            }
        }
        if !edge_keys.insert(e.key()) {
            out.push(Violation::DuplicateEdge {
                src: e.src.clone(),
                dst: e.dst.clone(),
                relation: e.relation,
                label: e.label.clone(),
            });
        }
    }

    // Hierarchy forest: at most one parent each, no cycles.
    let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut hier_pairs = HashSet::new();
    for e in g.edges_of(RelationType::Hierarchy) {
        // Labelled duplicates of the same pair still count once for parentage.
        if hier_pairs.insert((e.src.as_str(), e.dst.as_str())) {
            parents.entry(&e.dst).or_default().push(&e.src);
            children.entry(&e.src).or_default().push(&e.dst);
        }
    }
    for n in &g.nodes {
        if let Some(ps) = parents.get(n.id.as_str()) {
            if ps.len() > 1 {
                out.push(Violation::MultipleParents {
                    id: n.id.clone(),
                    parents: ps.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
    }
    out.extend(hierarchy_cycles(g, &children).into_iter().map(|path| Violation::HierarchyCycle { path }));
    out
}

fn hierarchy_cycles<'a>(g: &'a SceneGraph, children: &HashMap<&'a str, Vec<&'a str>>) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    let mut mark: HashMap<&str, Mark> = HashMap::new();
    let mut found: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut cycles = Vec::new();

    let roots: Vec<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    for &root in &roots {
        if mark.get(root).copied().unwrap_or(Mark::Fresh) != Mark::Fresh {
            continue;
        }
        // Iterative DFS: (node, next child index); `stack` mirrors the active path.
        let mut work: Vec<(&str, usize)> = vec![(root, 0)];
        let mut stack: Vec<&str> = vec![root];
        mark.insert(root, Mark::Active);
        while let Some((node, next)) = work.last_mut() {
            let kids = children.get(*node).map(Vec::as_slice).unwrap_or(&[]);
            if *next < kids.len() {
                let child = kids[*next];
                *next += 1;
                match mark.get(child).copied().unwrap_or(Mark::Fresh) {
                    Mark::Fresh => {
                        mark.insert(child, Mark::Active);
                        work.push((child, 0));
                        stack.push(child);
                    }
                    Mark::Active => {
                        let start = stack.iter().rposition(|&s| s == child).unwrap_or(0);
                        let mut path: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                        let min = path
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.cmp(b.1))
                            .map(|(i, _)| i)
                            .unwrap_or(0);
                        path.rotate_left(min);
                        let mut key = path.clone();
                        key.sort();
                        if found.insert(key) {
                            cycles.push(path);
                        }
                    }
                    Mark::Done => {}
                }
            } else {
                mark.insert(node, Mark::Done);
                work.pop();
                stack.pop();
            }
        }
    }
    cycles
}
