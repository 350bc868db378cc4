//! IO companion to `capnas-core`: search-space/architecture/benchmark file
//! formats, the proxy evaluation harness (correlations and timing), synthetic
//! benchmark generation, run manifests and the space templates shipped with
//! the tool.

pub mod benchio;
pub mod formats;
pub mod manifest;
pub mod templates;
