//! Basic-block construction.
//!
//! Blocks are maximal straight-line runs. An `if` turns the current block
//! into a branch block with fresh arm blocks and a fresh join block, even
//! when an arm is empty. A `while` gets its own header block (the current
//! block is reused when it is still empty) with a fresh body entry and a
//! fresh exit block. Unreachable blocks are dropped and the survivors are
//! renumbered with the entry first and the exit last.

use std::collections::VecDeque;
use std::fmt;

use super::ast::{Expr, Stmt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Entry,
    Exit,
    Block,
    Branch,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Entry => "entry",
            BlockKind::Exit => "exit",
            BlockKind::Block => "block",
            BlockKind::Branch => "branch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CondKeyword {
    If,
    While,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub keyword: CondKeyword,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: usize,
    pub kind: BlockKind,
    /// Straight-line statements: assignments, and a final return/break/continue.
    pub stmts: Vec<Stmt>,
    /// Set on branch blocks; evaluated after `stmts`.
    pub condition: Option<Condition>,
}

impl BasicBlock {
    /// Statements then condition, one per line.
    pub fn text(&self) -> String {
        let mut lines: Vec<String> = self.stmts.iter().filter_map(Stmt::simple_text).collect();
        if let Some(c) = &self.condition {
            lines.push(match c.keyword {
                CondKeyword::If => format!("if ({})", c.expr),
                CondKeyword::While => format!("while ({})", c.expr),
            });
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    None,
    True,
    False,
}

impl EdgeLabel {
    pub fn as_str(self) -> Option<&'static str> {
        match self {
            EdgeLabel::None => None,
            EdgeLabel::True => Some("true"),
            EdgeLabel::False => Some("false"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CfgEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
}

/// Where each statement of the source ended up, keyed by pre-order statement
/// number. `None` marks statements in pruned (unreachable) code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Site {
    Simple { block: Option<usize> },
    If { branch: Option<usize>, then_entry: Option<usize>, else_entry: Option<usize>, join: Option<usize> },
    While { header: Option<usize>, body_entry: Option<usize>, after: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<CfgEdge>,
    pub(crate) sites: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CfgError {
    #[error("'{0}' outside of a loop")]
    OutsideLoop(&'static str),
}

impl Cfg {
    pub fn entry(&self) -> usize {
        0
    }

    pub fn exit(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn successors(&self, block: usize) -> impl Iterator<Item = &CfgEdge> {
        self.edges.iter().filter(move |e| e.src == block)
    }

    pub fn predecessors(&self, block: usize) -> impl Iterator<Item = &CfgEdge> {
        self.edges.iter().filter(move |e| e.dst == block)
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&CfgEdge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    pub fn block_name(&self, block: usize) -> String {
        format!("b{block}")
    }

    /// Every structural invariant, as human-readable failures.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let count = |k: BlockKind| self.blocks.iter().filter(|b| b.kind == k).count();
        if count(BlockKind::Entry) != 1 || self.blocks.first().map(|b| b.kind) != Some(BlockKind::Entry) {
            problems.push("expected exactly one entry block, first".to_string());
        }
        if count(BlockKind::Exit) != 1 || self.blocks.last().map(|b| b.kind) != Some(BlockKind::Exit) {
            problems.push("expected exactly one exit block, last".to_string());
        }
        if self.predecessors(self.entry()).next().is_some() {
            problems.push("entry has predecessors".into());
        }
        if self.successors(self.exit()).next().is_some() {
            problems.push("exit has successors".into());
        }
        for b in &self.blocks {
            let succ: Vec<_> = self.successors(b.id).collect();
            if b.kind != BlockKind::Exit && succ.is_empty() {
                problems.push(format!("b{} has no successor", b.id));
            }
            if b.kind == BlockKind::Branch {
                let mut labels: Vec<_> = succ.iter().map(|e| e.label).collect();
                labels.sort();
                if labels != [EdgeLabel::True, EdgeLabel::False] {
                    problems.push(format!("branch b{} successors are labelled {labels:?}", b.id));
                }
            } else if succ.iter().any(|e| e.label != EdgeLabel::None) {
                problems.push(format!("non-branch b{} has labelled edges", b.id));
            }
        }
        let mut seen = vec![false; self.blocks.len()];
        let mut queue = VecDeque::from([self.entry()]);
        seen[self.entry()] = true;
        while let Some(b) = queue.pop_front() {
            for e in self.successors(b) {
                if !seen[e.dst] {
                    seen[e.dst] = true;
                    queue.push_back(e.dst);
                }
            }
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                problems.push(format!("b{i} unreachable"));
            }
        }
        problems
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "b{} [{}] {:?}", b.id, b.kind.as_str(), b.text())?;
        }
        for e in &self.edges {
            match e.label.as_str() {
                Some(l) => writeln!(f, "b{} -> b{} ({l})", e.src, e.dst)?,
                None => writeln!(f, "b{} -> b{}", e.src, e.dst)?,
            }
        }
        Ok(())
    }
}

struct Builder {
    blocks: Vec<BasicBlock>,
    edges: Vec<CfgEdge>,
    sites: Vec<Site>,
    loops: Vec<(usize, usize)>,
    exit: usize,
}

pub fn build_cfg(program: &[Stmt]) -> Result<Cfg, CfgError> {
    let mut b = Builder {
        blocks: Vec::new(),
        edges: Vec::new(),
        sites: Vec::new(),
        loops: Vec::new(),
        exit: 0,
    };
    let entry = b.block(BlockKind::Entry);
    b.exit = b.block(BlockKind::Exit);
    let first = b.block(BlockKind::Block);
    b.edge(entry, first, EdgeLabel::None);
    if let Some(end) = b.stmts(program, first)? {
        b.edge(end, b.exit, EdgeLabel::None);
    }
    Ok(b.finish())
}

impl Builder {
    fn block(&mut self, kind: BlockKind) -> usize {
        let id = self.blocks.len();
        self.blocks.push(BasicBlock { id, kind, stmts: Vec::new(), condition: None });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, label: EdgeLabel) {
        self.edges.push(CfgEdge { src, dst, label });
    }

    fn is_empty(&self, block: usize) -> bool {
        let b = &self.blocks[block];
        b.stmts.is_empty() && b.condition.is_none()
    }

    /// Lowers `stmts` starting in block `cur`. Returns the block control
    /// falls out of, or `None` when every path has jumped away.
    fn stmts(&mut self, stmts: &[Stmt], mut cur: usize) -> Result<Option<usize>, CfgError> {
        let mut live = true;
        for s in stmts {
            if !live {
                // Dead code still gets blocks so that errors surface; pruned later.
                cur = self.block(BlockKind::Block);
                live = true;
            }
            match s {
                Stmt::Assign { .. } => {
                    self.sites.push(Site::Simple { block: Some(cur) });
                    self.blocks[cur].stmts.push(s.clone());
                }
                Stmt::Return(_) => {
                    self.sites.push(Site::Simple { block: Some(cur) });
                    self.blocks[cur].stmts.push(s.clone());
                    self.edge(cur, self.exit, EdgeLabel::None);
                    live = false;
                }
                Stmt::Break | Stmt::Continue => {
                    let &(header, after) = self
                        .loops
                        .last()
                        .ok_or(CfgError::OutsideLoop(if *s == Stmt::Break { "break" } else { "continue" }))?;
                    self.sites.push(Site::Simple { block: Some(cur) });
                    self.blocks[cur].stmts.push(s.clone());
                    let target = if *s == Stmt::Break { after } else { header };
                    self.edge(cur, target, EdgeLabel::None);
                    live = false;
                }
                Stmt::If { cond, then_body, else_body } => {
                    let site = self.sites.len();
                    self.sites.push(Site::Simple { block: None });
                    self.blocks[cur].kind = BlockKind::Branch;
                    self.blocks[cur].condition = Some(Condition { keyword: CondKeyword::If, expr: cond.clone() });
                    let then_entry = self.block(BlockKind::Block);
                    let else_entry = else_body.as_ref().map(|_| self.block(BlockKind::Block));
                    let join = self.block(BlockKind::Block);
                    self.edge(cur, then_entry, EdgeLabel::True);
                    self.edge(cur, else_entry.unwrap_or(join), EdgeLabel::False);
                    if let Some(end) = self.stmts(then_body, then_entry)? {
                        self.edge(end, join, EdgeLabel::None);
                    }
                    if let (Some(body), Some(entry)) = (else_body, else_entry) {
                        if let Some(end) = self.stmts(body, entry)? {
                            self.edge(end, join, EdgeLabel::None);
                        }
                    }
                    self.sites[site] = Site::If {
                        branch: Some(cur),
                        then_entry: Some(then_entry),
                        else_entry,
                        join: Some(join),
                    };
                    cur = join;
                }
                Stmt::While { cond, body } => {
                    let site = self.sites.len();
                    self.sites.push(Site::Simple { block: None });
                    let header = if self.is_empty(cur) {
                        cur
                    } else {
                        let h = self.block(BlockKind::Block);
                        self.edge(cur, h, EdgeLabel::None);
                        h
                    };
                    self.blocks[header].kind = BlockKind::Branch;
                    self.blocks[header].condition = Some(Condition { keyword: CondKeyword::While, expr: cond.clone() });
                    let body_entry = self.block(BlockKind::Block);
                    let after = self.block(BlockKind::Block);
                    self.edge(header, body_entry, EdgeLabel::True);
                    self.edge(header, after, EdgeLabel::False);
                    self.loops.push((header, after));
                    let end = self.stmts(body, body_entry);
                    self.loops.pop();
                    if let Some(end) = end? {
                        self.edge(end, header, EdgeLabel::None);
                    }
                    self.sites[site] = Site::While {
                        header: Some(header),
                        body_entry: Some(body_entry),
                        after: Some(after),
                    };
                    cur = after;
                }
            }
        }
        Ok(live.then_some(cur))
    }

    fn finish(self) -> Cfg {
        let n = self.blocks.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            succ[e.src].push(e.dst);
        }
        let mut reach = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reach[0] = true;
        while let Some(b) = queue.pop_front() {
            for &d in &succ[b] {
                if !reach[d] {
                    reach[d] = true;
                    queue.push_back(d);
                }
            }
        }
        debug_assert!(reach[self.exit], "exit is reachable without constant folding");

        // Entry first, exit last, survivors in creation order between.
        let order: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|&i| i != self.exit && reach[i]))
            .chain(std::iter::once(self.exit))
            .collect();
        let mut remap = vec![None; n];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = Some(new);
        }
        let blocks = order
            .iter()
            .enumerate()
            .map(|(new, &old)| BasicBlock { id: new, ..self.blocks[old].clone() })
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| reach[e.src])
            .map(|e| CfgEdge {
                src: remap[e.src].expect("reachable"),
                dst: remap[e.dst].expect("successor of reachable"),
                label: e.label,
            })
            .collect();
        let m = |b: Option<usize>| b.and_then(|b| remap[b]);
        let sites = self
            .sites
            .into_iter()
            .map(|s| match s {
                Site::Simple { block } => Site::Simple { block: m(block) },
                Site::If { branch, then_entry, else_entry, join } => Site::If {
                    branch: m(branch),
                    then_entry: m(then_entry),
                    else_entry: m(else_entry),
                    join: m(join),
                },
                Site::While { header, body_entry, after } => Site::While {
                    header: m(header),
                    body_entry: m(body_entry),
                    after: m(after),
                },
            })
            .collect();
        Cfg { blocks, edges, sites }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_program;
    use super::*;

    fn cfg(src: &str) -> Cfg {
        let c = build_cfg(&parse_program(src).unwrap()).unwrap();
        assert!(c.check().is_empty(), "{:?}\n{c}", c.check());
        c
    }

    fn kinds(c: &Cfg) -> Vec<&'static str> {
        c.blocks.iter().map(|b| b.kind.as_str()).collect()
    }

    #[test]
    fn straight_line() {
        let c = cfg("x = 1; y = 2;");
        assert_eq!(kinds(&c), ["entry", "block", "exit"]);
        assert_eq!(c.blocks[1].stmts.len(), 2);
        assert_eq!(c.edges.len(), 2);
    }

    #[test]
    fn if_else_diamond() {
        let c = cfg("if (x < 1) { y = 1; } else { y = 2; } z = y;");
        assert_eq!(kinds(&c), ["entry", "branch", "block", "block", "block", "exit"]);
        assert_eq!(c.edges.len(), 6);
        assert_eq!(c.edge(1, 2).unwrap().label, EdgeLabel::True);
        assert_eq!(c.edge(1, 3).unwrap().label, EdgeLabel::False);
        assert_eq!(c.blocks[4].text(), "z = y;");
        assert_eq!(c.blocks[1].text(), "if (x < 1)");
    }

    #[test]
    fn while_has_back_edge() {
        let c = cfg("while (x < 3) { x = x + 1; } r = x;");
        // entry, header (reused empty block), body, after, exit
        assert_eq!(kinds(&c), ["entry", "branch", "block", "block", "exit"]);
        assert!(c.edge(2, 1).is_some(), "{c}");
    }

    #[test]
    fn header_gets_own_block_after_statements() {
        let c = cfg("i = 0; while (i < 2) { i = i + 1; }");
        assert_eq!(kinds(&c), ["entry", "block", "branch", "block", "block", "exit"]);
    }

    #[test]
    fn break_continue_return_targets() {
        let c = cfg("while (a) { if (b) { break; } else { continue; } } return 1;");
        // b1 header, b2 body entry/branch, b3 after(holds return), then arms.
        let header = 1;
        let after = c.blocks.iter().find(|b| b.text() == "return 1;").unwrap().id;
        let brk = c.blocks.iter().find(|b| b.text() == "break;").unwrap().id;
        let cont = c.blocks.iter().find(|b| b.text() == "continue;").unwrap().id;
        assert!(c.edge(brk, after).is_some());
        assert!(c.edge(cont, header).is_some());
        assert!(c.edge(after, c.exit()).is_some());
        // The if's join is unreachable (both arms jump) and was pruned.
        assert_eq!(c.blocks.len(), 7, "{c}");
    }

    #[test]
    fn unreachable_code_pruned() {
        let c = cfg("return 1; x = 2;");
        assert_eq!(kinds(&c), ["entry", "block", "exit"]);
    }

    #[test]
    fn break_outside_loop() {
        let p = parse_program("x = 1; break;").unwrap();
        assert_eq!(build_cfg(&p).unwrap_err(), CfgError::OutsideLoop("break"));
        let p = parse_program("return; continue;").unwrap();
        assert_eq!(build_cfg(&p).unwrap_err(), CfgError::OutsideLoop("continue"));
    }

    #[test]
    fn empty_program() {
        let c = cfg("");
        assert_eq!(kinds(&c), ["entry", "block", "exit"]);
    }
}
