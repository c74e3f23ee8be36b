//! Auditing toolkit for LLM-based scholar recommendation.

pub mod collector;
pub mod config;
pub mod corpus;
pub mod linkage;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod stats;
pub mod tasks;

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
