//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod criteria;
pub mod instances;
pub mod mock_server;
pub mod oracle;
