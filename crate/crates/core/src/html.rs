//! A strict parser for well-formed HTML and its mapping onto scene graphs.
//!
//! There is no error recovery: a stray close tag, an element left open at
//! end of input, or a second top-level element is an error. Comments and
//! `<!...>` declarations are skipped, whitespace-only text is dropped, and
//! the void elements never take children.

use std::fmt::Write as _;
use std::ops::Range;

use crate::graph::{GraphBuilder, RelationType, SceneEdge, SceneGraph, SceneNode};

pub const VOID_ELEMENTS: [&str; 13] = [
    "br", "img", "input", "hr", "meta", "link", "area", "base", "col", "embed", "source", "track", "wbr",
];

const RAW_TEXT_ELEMENTS: [&str; 2] = ["script", "style"];

pub const TEXT_KIND: &str = "text";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomKind {
    Element(String),
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    pub kind: DomKind,
    pub attributes: Vec<(String, Option<String>)>,
    pub children: Vec<DomNode>,
    /// Raw text for text nodes, empty for elements.
    pub text: String,
    /// Byte range in the source. For elements this covers the opening tag
    /// through the closing tag.
    pub span: Range<usize>,
    /// The opening tag exactly as written; empty for text nodes.
    pub open_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

impl DomNode {
    /// Tag name, or `"text"` for text nodes.
    pub fn kind_name(&self) -> &str {
        match &self.kind {
            DomKind::Element(t) => t,
            DomKind::Text => TEXT_KIND,
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self.kind, DomKind::Text)
    }

    /// Number of nodes in this subtree, self included.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(DomNode::count).sum::<usize>()
    }

    /// Follow a child-index path such as `/0/2/1` (the leading `0` is the root).
    pub fn locate(&self, path: &str) -> Option<&DomNode> {
        let mut parts = path.strip_prefix('/')?.split('/');
        if parts.next()? != "0" {
            return None;
        }
        let mut cur = self;
        for p in parts {
            let i: usize = p.parse().ok()?;
            cur = cur.children.get(i)?;
        }
        Some(cur)
    }

    /// Indented HTML for this subtree. Re-parsing yields the same tree shape.
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        self.write_html(&mut out, 0);
        out
    }

    fn write_html(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match &self.kind {
            DomKind::Text => {
                let _ = writeln!(out, "{pad}{}", self.text.trim());
            }
            DomKind::Element(tag) => {
                let _ = write!(out, "{pad}<{tag}");
                for (name, value) in &self.attributes {
                    match value {
                        Some(v) if v.contains('"') => {
                            let _ = write!(out, " {name}='{v}'");
                        }
                        Some(v) => {
                            let _ = write!(out, " {name}=\"{v}\"");
                        }
                        None => {
                            let _ = write!(out, " {name}");
                        }
                    }
                }
                out.push('>');
                if VOID_ELEMENTS.contains(&tag.as_str()) {
                    out.push('\n');
                    return;
                }
                out.push('\n');
                for c in &self.children {
                    c.write_html(out, depth + 1);
                }
                let _ = writeln!(out, "{pad}</{tag}>");
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

struct Open {
    node: DomNode,
}

/// Parse a document with exactly one top-level element.
pub fn parse_html(input: &str) -> Result<DomNode, ParseError> {
    if input.trim().is_empty() {
        return Err(ParseError { offset: 0, reason: "empty document".into() });
    }
    let mut p = Parser { src: input, pos: 0 };
    let mut stack: Vec<Open> = Vec::new();
    let mut root: Option<DomNode> = None;

    while p.pos < p.src.len() {
        let rest = &p.src[p.pos..];
        if rest.starts_with("<!--") {
            let end = rest
                .find("-->")
                .ok_or_else(|| p.error(p.pos, "unterminated comment"))?;
            p.pos += end + 3;
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest.find('>').ok_or_else(|| p.error(p.pos, "unterminated declaration"))?;
            p.pos += end + 1;
        } else if rest.starts_with("</") {
            let start = p.pos;
            p.pos += 2;
            let name = p.name().ok_or_else(|| p.error(p.pos, "expected tag name after '</'"))?;
            p.skip_ws();
            if !p.eat('>') {
                return Err(p.error(p.pos, "expected '>' to end close tag"));
            }
            let Some(open) = stack.pop() else {
                return Err(p.error(start, &format!("unexpected close tag {name}")));
            };
            let DomKind::Element(tag) = &open.node.kind else { unreachable!() };
            if *tag != name {
                return Err(p.error(start, &format!("mismatched close tag: expected {tag}, found {name}")));
            }
            let mut node = open.node;
            node.span.end = p.pos;
            attach(&mut stack, &mut root, node, start, &p)?;
        } else if rest.starts_with('<') && rest[1..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            let start = p.pos;
            p.pos += 1;
            let tag = p.name().expect("checked alphabetic");
            let attributes = p.attributes()?;
            let self_closing = p.eat('/');
            if !p.eat('>') {
                return Err(p.error(p.pos, &format!("expected '>' to end <{tag}> tag")));
            }
            let node = DomNode {
                kind: DomKind::Element(tag.clone()),
                attributes,
                children: Vec::new(),
                text: String::new(),
                span: start..p.pos,
                open_tag: p.src[start..p.pos].to_string(),
            };
            if self_closing || VOID_ELEMENTS.contains(&tag.as_str()) {
                attach(&mut stack, &mut root, node, start, &p)?;
            } else if RAW_TEXT_ELEMENTS.contains(&tag.as_str()) {
                let close = format!("</{tag}");
                let body_start = p.pos;
                let rel = p.src[body_start..]
                    .to_ascii_lowercase()
                    .find(&close)
                    .ok_or_else(|| p.error(start, &format!("unclosed element {tag}")))?;
                let mut node = node;
                let body = &p.src[body_start..body_start + rel];
                if !body.trim().is_empty() {
                    node.children.push(text_node(body, body_start..body_start + rel));
                }
                p.pos = body_start + rel;
                stack.push(Open { node });
            } else {
                if stack.is_empty() && root.is_some() {
                    return Err(p.error(start, "multiple root elements"));
                }
                stack.push(Open { node });
            }
        } else {
            let start = p.pos;
            let end = rest.find('<').map(|i| start + i).unwrap_or(p.src.len());
            // A lone '<' that opens nothing is ordinary text.
            let end = if end == start { start + 1 + rest[1..].find('<').unwrap_or(rest.len() - 1) } else { end };
            let text = &p.src[start..end];
            p.pos = end;
            if text.trim().is_empty() {
                continue;
            }
            attach(&mut stack, &mut root, text_node(text, start..end), start, &p)?;
        }
    }
    if let Some(open) = stack.last() {
        return Err(p.error(
            open.node.span.start,
            &format!("unclosed element {}", open.node.kind_name()),
        ));
    }
    root.ok_or_else(|| ParseError { offset: 0, reason: "no root element".into() })
}

fn text_node(text: &str, span: Range<usize>) -> DomNode {
    DomNode {
        kind: DomKind::Text,
        attributes: Vec::new(),
        children: Vec::new(),
        text: text.to_string(),
        open_tag: String::new(),
        span,
    }
}

fn attach(stack: &mut [Open], root: &mut Option<DomNode>, node: DomNode, at: usize, p: &Parser) -> Result<(), ParseError> {
    match stack.last_mut() {
        Some(parent) => {
            parent.node.children.push(node);
            Ok(())
        }
        None if root.is_some() => Err(p.error(at, "multiple root elements")),
        None if node.is_text() => Err(p.error(at, "text outside the root element")),
        None => {
            *root = Some(node);
            Ok(())
        }
    }
}

impl Parser<'_> {
    fn error(&self, offset: usize, reason: &str) -> ParseError {
        ParseError { offset, reason: reason.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    /// Tag or attribute name, lowercased.
    fn name(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | ':' | '.') {
                self.pos += 1;
            } else {
                break;
            }
        }
        (self.pos > start).then(|| self.src[start..self.pos].to_ascii_lowercase())
    }

    fn attributes(&mut self) -> Result<Vec<(String, Option<String>)>, ParseError> {
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(self.error(self.pos, "unterminated tag")),
                Some('>') | Some('/') => return Ok(attrs),
                _ => {}
            }
            let name = self
                .name()
                .ok_or_else(|| self.error(self.pos, "expected attribute name"))?;
            self.skip_ws();
            if !self.eat('=') {
                attrs.push((name, None));
                continue;
            }
            self.skip_ws();
            let value = match self.peek() {
                Some(q @ ('"' | '\'')) => {
                    self.pos += 1;
                    let rel = self.src[self.pos..]
                        .find(q)
                        .ok_or_else(|| self.error(self.pos, "unterminated attribute value"))?;
                    let v = self.src[self.pos..self.pos + rel].to_string();
                    self.pos += rel + 1;
                    v
                }
                Some(_) => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_whitespace() || c == '>' || c == '"' || c == '\'' || c == '=' || c == '<' || c == '`' {
                            break;
                        }
                        self.pos += c.len_utf8();
                    }
                    if self.pos == start {
                        return Err(self.error(self.pos, "expected attribute value"));
                    }
                    self.src[start..self.pos].to_string()
                }
                None => return Err(self.error(self.pos, "unterminated tag")),
            };
            attrs.push((name, Some(value)));
        }
    }
}

/// One node per DOM node, ids are child-index paths, one hierarchy edge per
/// parent/child pair. Element content is the opening tag as written.
pub fn dom_to_ssg(root: &DomNode) -> SceneGraph {
    let mut b = GraphBuilder::new();
    b.meta("extractor", "html");
    let mut work: Vec<(&DomNode, String, Option<String>)> = vec![(root, "/0".to_string(), None)];
    while let Some((node, path, parent)) = work.pop() {
        let content = match node.kind {
            DomKind::Text => node.text.clone(),
            DomKind::Element(_) => node.open_tag.clone(),
        };
        b.add_node(SceneNode::new(path.clone(), node.kind_name(), content))
            .expect("paths are unique and kinds non-empty");
        if let Some(p) = parent {
            b.add_edge(SceneEdge::new(p, path.clone(), RelationType::Hierarchy))
                .expect("parent was added first");
        }
        for (i, c) in node.children.iter().enumerate().rev() {
            work.push((c, format!("{path}/{i}"), Some(path.clone())));
        }
    }
    b.build().expect("a DOM tree is a forest")
}

/// Parse and convert in one step.
pub fn html_to_ssg(source: &str) -> Result<SceneGraph, ParseError> {
    let dom = parse_html(source)?;
    Ok(dom_to_ssg(&dom))
}
