//! Synthetic inputs, file formats and reports.

pub mod formats;
pub mod generate;
pub mod report;

pub use generate::{generate, GeneratorFile, GeneratorSpec};
