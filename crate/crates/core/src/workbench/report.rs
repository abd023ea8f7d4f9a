//! Deterministic JSON reports.
//!
//! A report carries the digests of its inputs and no timestamp, so the same
//! inputs always produce byte-identical output.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::profiler::ProfileDecomposition;
use crate::sampling::SamplingSet;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
pub struct DecompositionReport<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub input_sha256: String,
    pub params_sha256: String,
    pub sampling: &'a SamplingSet,
    pub decomposition: &'a ProfileDecomposition,
}

impl<'a> DecompositionReport<'a> {
    pub fn new(input: &[u8], params: &[u8], sampling: &'a SamplingSet, decomposition: &'a ProfileDecomposition) -> Self {
        DecompositionReport {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            input_sha256: sha256_hex(input),
            params_sha256: sha256_hex(params),
            sampling,
            decomposition,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
