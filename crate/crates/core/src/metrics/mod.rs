//! Rasterization, structural similarity, and pass-rate reporting.

mod corrupt;
mod layout;
mod raster;
mod report;
mod ssim;

pub use corrupt::corrupt_edges;
pub use layout::{layers, layout, rasterize, shade, LayoutError, BACKGROUND, INK, MIN_CANVAS, SHADES};
pub use raster::{RasterError, RasterImage};
pub use report::{pass_at_1, EvalReport, NoOutcomes, Outcome, TaskOutcome};
pub use ssim::{ssim, SsimError, C1, C2, WINDOW};
