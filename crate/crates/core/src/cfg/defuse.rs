//! Reaching definitions over a [`Cfg`] and the data-flow edges they imply.

use std::collections::{BTreeSet, VecDeque};

use crate::graph::{RelationType, SceneEdge, SceneGraph};

use super::build::{BasicBlock, Cfg};
use super::block_node_id;

/// A definition site: variable `var` assigned in block `block`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Def {
    pub block: usize,
    pub var: String,
}

/// Definitions (block, variable) leaving the block last, and variables read
/// before any assignment to them inside the block.
fn summarize(b: &BasicBlock) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut defined = BTreeSet::new();
    let mut exposed = BTreeSet::new();
    let mut note_uses = |e: &super::ast::Expr, defined: &BTreeSet<String>| {
        let mut uses = Vec::new();
        e.uses(&mut uses);
        for u in uses {
            if !defined.contains(u) {
                exposed.insert(u.to_string());
            }
        }
    };
    for s in &b.stmts {
        match s {
            super::ast::Stmt::Assign { name, value } => {
                note_uses(value, &defined);
                defined.insert(name.clone());
            }
            super::ast::Stmt::Return(Some(e)) => note_uses(e, &defined),
            _ => {}
        }
    }
    if let Some(c) = &b.condition {
        note_uses(&c.expr, &defined);
    }
    (defined, exposed)
}

/// Def-use pairs `(D, B, v)` with `D != B`: a definition of `v` in `D`
/// reaches the start of `B` and `B` reads `v` before redefining it.
pub fn reaching_pairs(c: &Cfg) -> BTreeSet<(usize, usize, String)> {
    let n = c.blocks.len();
    let summaries: Vec<_> = c.blocks.iter().map(summarize).collect();
    let mut reach_in: Vec<BTreeSet<Def>> = vec![BTreeSet::new(); n];
    let mut reach_out: Vec<BTreeSet<Def>> = vec![BTreeSet::new(); n];
    let mut work: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while let Some(b) = work.pop_front() {
        queued[b] = false;
        let input: BTreeSet<Def> = c.predecessors(b).flat_map(|e| reach_out[e.src].iter().cloned()).collect();
        let (gen, _) = &summaries[b];
        let mut out: BTreeSet<Def> = input.iter().filter(|d| !gen.contains(&d.var)).cloned().collect();
        out.extend(gen.iter().map(|v| Def { block: b, var: v.clone() }));
        reach_in[b] = input;
        if out != reach_out[b] {
            reach_out[b] = out;
            for e in c.successors(b) {
                if !queued[e.dst] {
                    queued[e.dst] = true;
                    work.push_back(e.dst);
                }
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for (b, (_, exposed)) in summaries.iter().enumerate() {
        for d in &reach_in[b] {
            if d.block != b && exposed.contains(&d.var) {
                pairs.insert((d.block, b, d.var.clone()));
            }
        }
    }
    pairs
}

/// Adds one data-flow edge per inter-block def-use pair, labelled with the
/// variable. Several variables flowing along the same pair share one edge
/// whose label lists them comma-separated. Re-applying changes nothing.
pub fn add_defuse_edges(g: &SceneGraph, c: &Cfg) -> SceneGraph {
    let mut grouped: std::collections::BTreeMap<(usize, usize), Vec<String>> = Default::default();
    for (d, b, v) in reaching_pairs(c) {
        grouped.entry((d, b)).or_default().push(v);
    }
    let mut builder = g.clone().into_builder();
    for ((d, b), vars) in grouped {
        let edge = SceneEdge::new(block_node_id(d), block_node_id(b), RelationType::DataFlow).labeled(vars.join(","));
        builder.add_edge_if_absent(edge).expect("both endpoints are blocks of this cfg");
    }
    builder.build().expect("data-flow edges never break validity")
}

#[cfg(test)]
mod tests {
    use super::super::{build_cfg, cfg_to_ssg, parse_program};
    use super::*;

    fn pairs(src: &str) -> Vec<(usize, usize, String)> {
        reaching_pairs(&build_cfg(&parse_program(src).unwrap()).unwrap()).into_iter().collect()
    }

    #[test]
    fn single_block_has_no_pairs() {
        assert!(pairs("x = 1; y = x;").is_empty());
    }

    #[test]
    fn diamond_feeds_join_from_both_arms() {
        // entry b0, branch b1, then b2, else b3, join b4, exit b5
        let got = pairs("if (x < 1) { y = 1; } else { y = 2; } z = y;");
        assert_eq!(got, [(2, 4, "y".to_string()), (3, 4, "y".to_string())]);
    }

    #[test]
    fn loop_body_feeds_header() {
        // entry b0, header b1, body b2, after b3, exit b4
        let got = pairs("while (x < 3) { x = x + 1; } r = x;");
        assert_eq!(got, [(2, 1, "x".to_string()), (2, 3, "x".to_string())]);
    }

    #[test]
    fn redefinition_kills() {
        // The first x is overwritten before the join reads it.
        let got = pairs("x = 1; if (c) { x = 2; } else { x = 3; } y = x;");
        assert!(got.iter().all(|(d, _, _)| *d != 1), "{got:?}");
    }

    #[test]
    fn edges_are_idempotent_and_data_flow_only() {
        let c = build_cfg(&parse_program("if (x < 1) { y = 1; } else { y = 2; } z = y;").unwrap()).unwrap();
        let g = cfg_to_ssg(&c);
        let once = add_defuse_edges(&g, &c);
        let twice = add_defuse_edges(&once, &c);
        assert_eq!(once, twice);
        assert_eq!(once.nodes(), g.nodes());
        let extra: Vec<_> = once.edges().iter().filter(|e| !g.edges().contains(e)).collect();
        assert_eq!(extra.len(), 2);
        assert!(extra.iter().all(|e| e.relation == RelationType::DataFlow));
        assert_eq!(extra[0].label.as_deref(), Some("y"));
    }
}
