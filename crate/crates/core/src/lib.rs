//! Wavelet profile decomposition on stratified Lie groups.

pub mod coeff;
pub mod error;
pub mod group;
pub mod profiler;
pub mod sampling;
pub mod transform;
pub mod window;
pub mod workbench;

pub use error::{Error, Result};
