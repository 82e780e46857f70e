//! Control-flow graphs for a small imperative language, and their scene
//! graphs.
//!
//! ```
//! use ssg::cfg::{build_cfg, cfg_to_ssg, parse_mini};
//! use ssg::graph::RelationType;
//!
//! let program = parse_mini("x = 1; y = 2;").unwrap();
//! let cfg = build_cfg(&program).unwrap();
//! let g = cfg_to_ssg(&cfg);
//! assert_eq!(g.len(), 3);
//! assert_eq!(g.edges_of(RelationType::ControlFlow).count(), 2);
//! ```

pub mod ast;
mod build;
mod defuse;
pub mod gen;
mod interp;
mod parse;

pub use ast::{pretty, BinOp, Expr, Stmt, UnOp};
pub use build::{BasicBlock, BlockKind, Cfg, CfgEdge, CfgError, CondKeyword, Condition, EdgeLabel};
pub use defuse::{add_defuse_edges, reaching_pairs};
pub use interp::{interpret, run_traced, Env, Execution, InterpError, Run, Step, Termination};
pub use parse::{parse_program, ParseError};

use crate::graph::{GraphBuilder, RelationType, SceneEdge, SceneGraph, SceneNode};

/// Source text together with its syntax tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniProgram {
    pub source: String,
    pub ast: Vec<Stmt>,
}

impl std::ops::Deref for MiniProgram {
    type Target = [Stmt];

    fn deref(&self) -> &[Stmt] {
        &self.ast
    }
}

pub fn parse_mini(source: &str) -> Result<MiniProgram, ParseError> {
    Ok(MiniProgram { source: source.to_string(), ast: parse_program(source)? })
}

pub fn build_cfg(program: &[Stmt]) -> Result<Cfg, CfgError> {
    build::build_cfg(program)
}

pub(crate) fn block_node_id(block: usize) -> String {
    format!("b{block}")
}

/// One node per block and one control-flow edge per CFG edge.
pub fn cfg_to_ssg(c: &Cfg) -> SceneGraph {
    let mut b = GraphBuilder::new();
    b.meta("extractor", "cfg");
    for block in &c.blocks {
        b.add_node(SceneNode::new(block_node_id(block.id), block.kind.as_str(), block.text()))
            .expect("block ids are unique");
    }
    for e in &c.edges {
        let mut edge = SceneEdge::new(block_node_id(e.src), block_node_id(e.dst), RelationType::ControlFlow);
        if let Some(l) = e.label.as_str() {
            edge = edge.labeled(l);
        }
        b.add_edge(edge).expect("cfg edges are unique");
    }
    b.build().expect("control-flow graphs carry no hierarchy")
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("syntax error at {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Cfg(#[from] CfgError),
}

/// Parse, build, and convert in one step, optionally adding def-use edges.
pub fn extract(source: &str, defuse: bool) -> Result<SceneGraph, ExtractError> {
    let p = parse_mini(source)?;
    let c = build_cfg(&p)?;
    let g = cfg_to_ssg(&c);
    Ok(if defuse { add_defuse_edges(&g, &c) } else { g })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_edge_is_labelled() {
        let g = extract("if (x < 1) { y = 1; } else { y = 2; } z = y;", false).unwrap();
        assert_eq!(g.len(), 6);
        let labels: Vec<_> =
            g.edges().iter().filter(|e| e.src == "b1").map(|e| e.label.as_deref().unwrap()).collect();
        assert_eq!(labels.len(), 2);
        assert!(labels.contains(&"true") && labels.contains(&"false"));
        assert_eq!(g.node("b1").unwrap().kind, "branch");
        assert_eq!(g.node("b4").unwrap().content, "z = y;");
    }

    #[test]
    fn loop_is_a_valid_cycle() {
        let g = extract("while (x < 3) { x = x + 1; } r = x;", false).unwrap();
        assert!(g.validate().is_empty());
        assert!(g.has_edge(&SceneEdge::new("b2", "b1", RelationType::ControlFlow)));
        assert_eq!(g.node("b1").unwrap().content, "while (x < 3)");
    }

    #[test]
    fn error_mapping() {
        assert!(matches!(extract("break;", false), Err(ExtractError::Cfg(_))));
        assert!(matches!(extract("x = ;", false), Err(ExtractError::Parse(_))));
        assert_eq!(parse_mini("x = 1;").unwrap().source, "x = 1;");
    }
}
