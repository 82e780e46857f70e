//! Semantic scene graphs for visual bug reports.
//!
//! An artifact (a web page, a control-flow diagram) is reduced to a
//! [`graph::SceneGraph`], written as Mermaid for a model to read, and used to
//! steer a patch-and-test repair loop in [`repair`]. The guide in `book/`
//! walks through each module; its snippets run as doc tests.
//!
//! ```
//! let g = ssg::html::html_to_ssg("<p>hello</p>").unwrap();
//! let doc = ssg::mermaid::serialize(&g).unwrap();
//! assert!(ssg::mermaid::parse(&doc).unwrap().isomorphic(&g));
//! ```

pub mod graph;
pub mod mermaid;
pub mod html;
pub mod cfg;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod segment;
pub mod repair;
pub mod dataset;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scene-graphs.md")]
    mod scene_graphs {}
    #[doc = include_str!("../../../book/src/mermaid.md")]
    mod mermaid {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/repair.md")]
    mod repair {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
