//! Layered layout and rasterization of scene graphs.
//!
//! Nodes are assigned to layers by longest path from a source over control
//! flow and hierarchy edges. Back edges found by a depth-first search in
//! node-id order are ignored for layering. Each layer is a horizontal band
//! and nodes within it sit in id order. Edges are drawn
//! first as one-pixel lines between box centres, then boxes are painted over
//! them: a black border and an interior shade picked by hashing the kind.

use std::collections::BTreeMap;

use crate::graph::{BoundingBox, RelationType, SceneGraph};

use super::raster::RasterImage;

pub const MIN_CANVAS: u32 = 64;
pub const MIN_NODE_WIDTH: u32 = 12;
pub const MIN_NODE_HEIGHT: u32 = 8;
pub const BACKGROUND: u8 = 255;
pub const INK: u8 = 0;
pub const SHADES: [u8; 3] = [64, 128, 192];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("canvas {width}x{height} is below the {MIN_CANVAS}x{MIN_CANVAS} minimum")]
    CanvasBelowMinimum { width: u32, height: u32 },
    #[error("canvas {width}x{height} cannot fit {nodes} nodes at 12x8 px each")]
    CanvasTooSmall { width: u32, height: u32, nodes: usize },
}

/// Layer index of every node, keyed by id.
pub fn layers(g: &SceneGraph) -> BTreeMap<&str, usize> {
    let mut ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
    ids.sort_unstable();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for e in g.edges() {
        if matches!(e.relation, RelationType::ControlFlow | RelationType::Hierarchy) {
            succ[index[e.src.as_str()]].push(index[e.dst.as_str()]);
        }
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }

    // Iterative DFS: 0 = unseen, 1 = on stack, 2 = done. Edges into an
    // on-stack node are back edges and are dropped. Post-order gives a
    // reverse topological order of the remaining DAG.
    let n = ids.len();
    let mut state = vec![0u8; n];
    let mut post = Vec::with_capacity(n);
    let mut dag: Vec<Vec<usize>> = vec![Vec::new(); n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        state[root] = 1;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, i)) = stack.last_mut() {
            let v = *v;
            if let Some(&w) = succ[v].get(*i) {
                *i += 1;
                match state[w] {
                    0 => {
                        dag[v].push(w);
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => {}
                    _ => dag[v].push(w),
                }
            } else {
                state[v] = 2;
                post.push(v);
                stack.pop();
            }
        }
    }
    let mut layer = vec![0usize; n];
    for &v in post.iter().rev() {
        for &w in &dag[v] {
            layer[w] = layer[w].max(layer[v] + 1);
        }
    }
    ids.into_iter().zip(layer).collect()
}

/// Pixel box of every node on a `width` x `height` canvas.
///
/// The canvas is an n x n grid of equal cells for n nodes. A node's column
/// is its rank in id order and its row is its layer, so redirecting one edge
/// only moves the nodes whose layer changes.
pub fn layout(g: &SceneGraph, width: u32, height: u32) -> Result<BTreeMap<String, BoundingBox>, LayoutError> {
    if width < MIN_CANVAS || height < MIN_CANVAS {
        return Err(LayoutError::CanvasBelowMinimum { width, height });
    }
    let mut boxes = BTreeMap::new();
    if g.is_empty() {
        return Ok(boxes);
    }
    let n = u32::try_from(g.len()).unwrap_or(u32::MAX);
    let (cell_w, cell_h) = (width / n, height / n);
    let (pad_x, pad_y) = (cell_w / 6, cell_h / 6);
    let (w, h) = (cell_w - 2 * pad_x, cell_h - 2 * pad_y);
    if w < MIN_NODE_WIDTH || h < MIN_NODE_HEIGHT {
        return Err(LayoutError::CanvasTooSmall { width, height, nodes: g.len() });
    }
    let (left, top) = ((width - n * cell_w) / 2, (height - n * cell_h) / 2);
    // `layers` yields ids in sorted order, so the enumeration index is the rank.
    for (rank, (id, layer)) in layers(g).into_iter().enumerate() {
        let x = left + rank as u32 * cell_w + pad_x;
        let y = top + layer as u32 * cell_h + pad_y;
        boxes.insert(id.to_string(), BoundingBox::new(x, y, w, h).expect("w and h checked above"));
    }
    Ok(boxes)
}

/// Interior shade for a node kind (FNV-1a hash into [`SHADES`]).
pub fn shade(kind: &str) -> u8 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in kind.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    SHADES[(h % SHADES.len() as u64) as usize]
}

pub fn rasterize(g: &SceneGraph, width: u32, height: u32) -> Result<RasterImage, LayoutError> {
    let boxes = layout(g, width, height)?;
    let mut img = RasterImage::filled(width, height, BACKGROUND).expect("canvas is at least 64x64");
    let centre = |b: &BoundingBox| (i64::from(b.x + b.w / 2), i64::from(b.y + b.h / 2));
    for e in g.edges() {
        let (x0, y0) = centre(&boxes[&e.src]);
        let (x1, y1) = centre(&boxes[&e.dst]);
        line(&mut img, (x0, y0), (x1, y1));
    }
    for n in g.nodes() {
        let b = boxes[&n.id];
        let fill = shade(&n.kind);
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let border = x == b.x || y == b.y || x == b.x + b.w - 1 || y == b.y + b.h - 1;
                img.set(x, y, if border { INK } else { fill });
            }
        }
    }
    Ok(img)
}

fn line(img: &mut RasterImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        img.set(x0 as u32, y0 as u32, INK);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
