//! Command implementations behind the `randtrial` binary: config ingestion
//! and sweep expansion, CSV persistence, SVG chart emission, and the exact
//! enumeration report.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;
pub mod svg;
