//! Mermaid flowchart subset: a lossless text form for scene graphs.
//!
//! ```text
//! doc    := "graph TD" NL (nodeln | edgeln | blank)*
//! nodeln := WS id '["' label '"]' NL            ; id matches n[0-9]+
//! edgeln := WS id WS arrow (WS '|' text '|')? WS id NL
//! arrow  := "-->" | "-.->" | "==>"
//! label  := origId '|' kind '|' content ('@' x ',' y ',' w ',' h)?
//! ```
//!
//! Arrow style encodes the relation: `-->` control flow, `-.->` data flow,
//! `==>` hierarchy. Inside labels and edge texts the characters `#`, `"`,
//! `|`, `@` and control characters are written as entities (`#35;`,
//! `#quot;`, `#pipe;`, `#64;`, `#br;` for newline, `#<code>;` otherwise).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::graph::{BoundingBox, GraphBuilder, GraphError, RelationType, SceneEdge, SceneGraph, SceneNode, Violation};

pub const HEADER: &str = "graph TD";

/// A document in the supported Mermaid subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MermaidDoc(pub String);

impl MermaidDoc {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for MermaidDoc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SerializeError {
    #[error("graph is invalid: {}", crate::graph::join_violations(.0))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rendering accuracy needs at least one document")]
pub struct NoDocuments;

fn arrow(relation: RelationType) -> &'static str {
    match relation {
        RelationType::ControlFlow => "-->",
        RelationType::DataFlow => "-.->",
        RelationType::Hierarchy => "==>",
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '#' => out.push_str("#35;"),
            '"' => out.push_str("#quot;"),
            '|' => out.push_str("#pipe;"),
            '@' => out.push_str("#64;"),
            '\n' => out.push_str("#br;"),
            c if c.is_control() => {
                let _ = write!(out, "#{};", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(text: &str) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('#') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + 1..];
        let end = after
            .find(';')
            .ok_or_else(|| format!("unterminated entity in {text:?}"))?;
        let name = &after[..end];
        let c = match name {
            "quot" => '"',
            "pipe" => '|',
            "br" => '\n',
            digits if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => digits
                .parse::<u32>()
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| format!("bad character entity #{digits};"))?,
            other => return Err(format!("unknown entity #{other};")),
        };
        out.push(c);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Deterministic Mermaid text for a valid graph. Nodes are renamed
/// `n0..nK` in graph order; the original id travels inside the label.
pub fn serialize(g: &SceneGraph) -> Result<MermaidDoc, SerializeError> {
    let violations = g.validate();
    if !violations.is_empty() {
        return Err(SerializeError::Invalid(violations));
    }
    let mut out = String::from(HEADER);
    out.push('\n');
    let mut short: HashMap<&str, usize> = HashMap::with_capacity(g.len());
    for (i, n) in g.nodes().iter().enumerate() {
        short.insert(&n.id, i);
        let _ = write!(out, "  n{i}[\"{}|{}|{}", escape(&n.id), escape(&n.kind), escape(&n.content));
        if let Some(b) = n.bbox {
            let _ = write!(out, "@{},{},{},{}", b.x, b.y, b.w, b.h);
        }
        out.push_str("\"]\n");
    }
    for e in g.edges() {
        let _ = write!(out, "  n{} {}", short[e.src.as_str()], arrow(e.relation));
        if let Some(l) = &e.label {
            let _ = write!(out, "|{}|", escape(l));
        }
        let _ = writeln!(out, " n{}", short[e.dst.as_str()]);
    }
    Ok(MermaidDoc(out))
}

/// Parses the subset back into a valid graph.
pub fn parse(doc: &MermaidDoc) -> Result<SceneGraph, ParseError> {
    parse_str(doc.as_str())
}

pub fn parse_str(text: &str) -> Result<SceneGraph, ParseError> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let err = |line: usize, reason: String| ParseError { line, reason };

    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some(h) => break h,
            None => return Err(err(1, "missing header".into())),
        }
    };
    if header.1.trim() != HEADER {
        return Err(err(header.0, "unsupported header".into()));
    }

    let mut builder = GraphBuilder::new();
    let mut ids: HashMap<String, String> = HashMap::new();
    let mut hier_parent: HashMap<String, String> = HashMap::new();

    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (short, rest) = split_id(line).ok_or_else(|| err(no, format!("expected node id, found {line:?}")))?;
        if let Some(label) = rest.strip_prefix("[\"") {
            let body = label
                .strip_suffix("\"]")
                .ok_or_else(|| err(no, "unbalanced brackets in node declaration".into()))?;
            if body.contains('"') {
                return Err(err(no, "unbalanced brackets in node declaration".into()));
            }
            let node = decode_label(body).map_err(|r| err(no, r))?;
            if ids.contains_key(short) {
                return Err(err(no, format!("node {short} declared twice")));
            }
            let orig = node.id.clone();
            builder.add_node(node).map_err(|e| err(no, e.to_string()))?;
            ids.insert(short.to_string(), orig);
        } else {
            let edge = decode_edge(rest.trim_start(), &ids, short).map_err(|r| err(no, r))?;
            if edge.relation == RelationType::Hierarchy {
                if let Some(p) = hier_parent.get(&edge.dst) {
                    if *p != edge.src {
                        return Err(err(no, format!("node {} has multiple hierarchy parents", edge.dst)));
                    }
                } else {
                    // A new parent link must not make the child its own ancestor.
                    let mut cur = Some(edge.src.as_str());
                    while let Some(c) = cur {
                        if c == edge.dst {
                            return Err(err(no, format!("hierarchy cycle through {}", edge.dst)));
                        }
                        cur = hier_parent.get(c).map(String::as_str);
                    }
                    hier_parent.insert(edge.dst.clone(), edge.src.clone());
                }
            }
            builder.add_edge(edge).map_err(|e| match e {
                GraphError::DuplicateEdge { .. } => err(no, e.to_string()),
                other => err(no, other.to_string()),
            })?;
        }
    }
    let last = text.split('\n').count();
    builder.build().map_err(|e| err(last, e.to_string()))
}

fn split_id(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    if bytes.first() != Some(&b'n') {
        return None;
    }
    let digits = bytes[1..].iter().take_while(|b| b.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    Some(line.split_at(1 + digits))
}

fn decode_label(body: &str) -> Result<SceneNode, String> {
    let mut parts = body.splitn(3, '|');
    let (Some(id), Some(kind), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("node label must be origId|kind|content".into());
    };
    let (content, bbox) = match rest.rsplit_once('@') {
        Some((content, coords)) => (content, Some(decode_bbox(coords)?)),
        None => (rest, None),
    };
    if content.contains('|') {
        return Err("unescaped '|' in node content".into());
    }
    let mut node = SceneNode::new(unescape(id)?, unescape(kind)?, unescape(content)?);
    node.bbox = bbox;
    Ok(node)
}

fn decode_bbox(coords: &str) -> Result<BoundingBox, String> {
    let nums: Vec<&str> = coords.split(',').collect();
    let malformed = || format!("malformed bbox {coords:?}");
    if nums.len() != 4 {
        return Err(malformed());
    }
    let mut v = [0u32; 4];
    for (slot, s) in v.iter_mut().zip(&nums) {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        *slot = s.parse().map_err(|_| malformed())?;
    }
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| format!("malformed bbox: {e}"))
}

fn decode_edge(rest: &str, ids: &HashMap<String, String>, src_short: &str) -> Result<SceneEdge, String> {
    let (relation, after) = if let Some(a) = rest.strip_prefix("-.->") {
        (RelationType::DataFlow, a)
    } else if let Some(a) = rest.strip_prefix("-->") {
        (RelationType::ControlFlow, a)
    } else if let Some(a) = rest.strip_prefix("==>") {
        (RelationType::Hierarchy, a)
    } else {
        return Err(format!("expected node label or arrow after {src_short}"));
    };
    let after = after.trim_start();
    let (label, target) = match after.strip_prefix('|') {
        Some(l) => {
            let end = l.find('|').ok_or("unterminated edge label")?;
            (Some(unescape(&l[..end])?), l[end + 1..].trim_start())
        }
        None => (None, after),
    };
    let (dst_short, tail) = split_id(target).ok_or_else(|| format!("expected target node id, found {target:?}"))?;
    if !tail.trim().is_empty() {
        return Err(format!("unexpected text after edge: {tail:?}"));
    }
    let src = ids.get(src_short).ok_or_else(|| format!("undeclared node {src_short}"))?;
    let dst = ids.get(dst_short).ok_or_else(|| format!("undeclared node {dst_short}"))?;
    Ok(SceneEdge {
        src: src.clone(),
        dst: dst.clone(),
        relation,
        label,
    })
}

/// Fraction of documents that parse.
pub fn rendering_accuracy<'a, I>(docs: I) -> Result<f64, NoDocuments>
where
    I: IntoIterator<Item = &'a MermaidDoc>,
{
    let (mut ok, mut total) = (0u64, 0u64);
    for d in docs {
        total += 1;
        if parse(d).is_ok() {
            ok += 1;
        }
    }
    if total == 0 {
        return Err(NoDocuments);
    }
    Ok(ok as f64 / total as f64)
}
