//! Focusing a failed repair on one region of the artifact.
//!
//! A model proposes a bounding box ([`propose_region`]); [`crop`] then cuts
//! both the raster and the scene graph down to that box.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::graph::{BoundingBox, SceneGraph};
use crate::metrics::RasterImage;
use crate::model::{ModelBackend, ModelError, ModelRequest};
use crate::prompt::{Template, TemplateError};

pub const DEFAULT_MAX_ROUNDS: u32 = 3;

#[derive(Debug, Clone)]
pub struct SegmentationRequest {
    pub artifact: RasterImage,
    pub issue_text: String,
    pub code_snippets: Vec<(String, String)>,
    resolution: (u32, u32),
}

impl SegmentationRequest {
    pub fn new(artifact: RasterImage, issue_text: impl Into<String>, code_snippets: Vec<(String, String)>) -> Self {
        let resolution = (artifact.width(), artifact.height());
        SegmentationRequest { artifact, issue_text: issue_text.into(), code_snippets, resolution }
    }

    pub fn resolution(&self) -> (u32, u32) {
        self.resolution
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationResponse {
    pub reason: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model reply has no usable <result>[x, y, w, h]</result> block: {raw:?}")]
    Format { raw: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

fn result_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)<result>.*?\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\].*?</result>")
            .expect("valid pattern")
    })
}

fn reason_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<reason>(.*?)</reason>").expect("valid pattern"))
}

/// Fits a proposed `[x, y, w, h]` inside a `width` x `height` image. The
/// corner is pulled inside first, then the size is cut to the remaining
/// room, never below one pixel.
pub fn clamp_box(raw: [i64; 4], width: u32, height: u32) -> BoundingBox {
    let (w_max, h_max) = (i64::from(width), i64::from(height));
    let x = raw[0].clamp(0, w_max - 1);
    let y = raw[1].clamp(0, h_max - 1);
    let w = raw[2].clamp(1, w_max - x);
    let h = raw[3].clamp(1, h_max - y);
    BoundingBox::new(x as u32, y as u32, w as u32, h as u32).expect("clamped sizes are at least 1")
}

/// Extracts reason and clamped box from a model reply.
pub fn parse_region(text: &str, width: u32, height: u32) -> Result<SegmentationResponse, SegmentError> {
    let format_error = || SegmentError::Format { raw: text.to_string() };
    let caps = result_pattern().captures(text).ok_or_else(format_error)?;
    let mut raw = [0i64; 4];
    for (i, slot) in raw.iter_mut().enumerate() {
        *slot = caps[i + 1].parse().map_err(|_| format_error())?;
    }
    let bbox = clamp_box(raw, width, height);
    let mut reason =
        reason_pattern().captures(text).map(|c| c[1].trim().to_string()).unwrap_or_default();
    let unchanged = [bbox.x, bbox.y, bbox.w, bbox.h].iter().zip(raw).all(|(&a, b)| i64::from(a) == b);
    if !unchanged {
        let note = format!(
            "clamped [{}, {}, {}, {}] to {bbox} for a {width}x{height} image",
            raw[0], raw[1], raw[2], raw[3]
        );
        reason = if reason.is_empty() { note } else { format!("{reason} ({note})") };
    }
    Ok(SegmentationResponse { reason, bbox })
}

fn render_snippets(snippets: &[(String, String)]) -> String {
    if snippets.is_empty() {
        return "(none)".into();
    }
    snippets.iter().map(|(path, text)| format!("{path}\n{text}")).collect::<Vec<_>>().join("\n\n")
}

/// Asks `backend` for the region of the artifact most related to the issue.
pub fn propose_region(
    req: &SegmentationRequest,
    backend: &dyn ModelBackend,
    template: &Template,
    scenario_key: &str,
) -> Result<SegmentationResponse, SegmentError> {
    let (w, h) = req.resolution();
    let resolution = format!("{w}x{h}");
    let snippets = render_snippets(&req.code_snippets);
    let (system, user) = template.render(&[
        ("resolution", &resolution),
        ("problem_statement", &req.issue_text),
        ("code_snips", &snippets),
    ])?;
    let reply = backend.complete(&ModelRequest::new(system, user, scenario_key))?;
    parse_region(&reply.text, w, h)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CropError {
    #[error("crop box {bbox} lies outside the {width}x{height} artifact")]
    OutOfBounds { bbox: BoundingBox, width: u32, height: u32 },
    #[error("crop box {0} contains no node centres")]
    EmptyRegion(BoundingBox),
}

/// Keeps the nodes whose box centre lies in `region`, plus box-less nodes
/// whose nearest hierarchy ancestor is kept, and cuts the raster to
/// `region`. Kept boxes are moved into the cropped frame and clipped to it.
/// A graph with no boxes at all is returned whole.
pub fn crop(g: &SceneGraph, img: &RasterImage, region: BoundingBox) -> Result<(SceneGraph, RasterImage), CropError> {
    let sub = img.sub_image(region).map_err(|_| CropError::OutOfBounds {
        bbox: region,
        width: img.width(),
        height: img.height(),
    })?;
    if g.nodes().iter().all(|n| n.bbox.is_none()) {
        log::info!("graph has no bounding boxes; keeping all {} nodes", g.len());
        return Ok((g.clone(), sub));
    }
    let mut memo: HashMap<&str, bool> = HashMap::new();
    let keep: Vec<&str> = g
        .nodes()
        .iter()
        .filter(|n| retained(g, &n.id, region, &mut memo))
        .map(|n| n.id.as_str())
        .collect();
    if keep.is_empty() {
        return Err(CropError::EmptyRegion(region));
    }
    let kept = g.induced_subgraph(keep).expect("ids come from g");
    let moved = kept.map_bboxes(|n| n.bbox.map(|b| translate(b, region)));
    Ok((moved, sub))
}

fn retained<'a>(g: &'a SceneGraph, id: &'a str, region: BoundingBox, memo: &mut HashMap<&'a str, bool>) -> bool {
    // Walk up to the nearest boxed ancestor; the hierarchy is a forest so this ends.
    let mut chain = Vec::new();
    let mut cur = Some(id);
    let verdict = loop {
        let Some(node_id) = cur else { break false };
        if let Some(&v) = memo.get(node_id) {
            break v;
        }
        chain.push(node_id);
        match g.node(node_id).and_then(|n| n.bbox) {
            Some(b) => break region.contains_center_of(&b),
            None => cur = g.parent(node_id),
        }
    };
    for n in chain {
        memo.insert(n, verdict);
    }
    verdict
}

fn translate(b: BoundingBox, region: BoundingBox) -> BoundingBox {
    let left = b.x.max(region.x);
    let top = b.y.max(region.y);
    let right = b.right().min(region.right()) as u32;
    let bottom = b.bottom().min(region.bottom()) as u32;
    BoundingBox::new(left - region.x, top - region.y, right.saturating_sub(left).max(1), bottom.saturating_sub(top).max(1))
        .expect("sizes forced positive")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Proceed,
    Stop,
}

/// Whether round `round` (counting from 1) may run under a cap of `max_rounds`.
pub fn iteration_gate(round: u32, max_rounds: u32) -> Gate {
    if round <= max_rounds {
        Gate::Proceed
    } else {
        Gate::Stop
    }
}
