//! Batch runner: configuration, orchestration and artifact emission.

pub mod config;
pub mod manifest;
pub mod run;
pub mod svg;
