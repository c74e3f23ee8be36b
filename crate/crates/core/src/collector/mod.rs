//! Prompt execution against chat-completion endpoints, retries, scheduling
//! and the append-only attempt archive.

mod archive;
mod clock;
mod schedule;
mod transport;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::tasks::{InterventionSpec, TaskVariant};

pub use archive::{
    replay, ArchiveEntry, ArchiveHeader, ArchiveWriter, ArchivedRecord, GapRecord, Replay,
    Truncation, ARCHIVE_FORMAT_VERSION,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use schedule::{
    run_calibration, PlannedConfig, Probe, RunnerState, SchedulePlan, ScheduleRunner, StepReport,
};
pub use transport::{ChatRequest, ChatTransport, HttpTransport, RateLimiter, TransportReply};

/// Attempts per scheduled query: the initial request plus two retries.
pub const MAX_ATTEMPTS: u8 = 3;

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("archive {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("archive {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("model {model}: {reason}")]
    Model { model: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Open,
    Proprietary,
}

fn default_max_temperature() -> f64 {
    2.0
}

fn default_retrieval_payload() -> serde_json::Value {
    serde_json::json!({ "tools": [{ "type": "web_search" }] })
}

/// One chat-completion model endpoint plus the metadata used for grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub endpoint: Url,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_ref: String,
    pub default_temperature: f64,
    #[serde(default = "default_max_temperature")]
    pub max_temperature: f64,
    #[serde(default)]
    pub supports_retrieval: bool,
    /// Merged into the request body when retrieval is enabled.
    #[serde(default = "default_retrieval_payload")]
    pub retrieval_payload: serde_json::Value,
    pub max_output_tokens: u32,
    pub request_timeout_secs: f64,
    #[serde(default)]
    pub min_request_interval_ms: u64,
    #[serde(default)]
    pub family: String,
    #[serde(default)]
    pub access: Option<Access>,
    #[serde(default)]
    pub size_class: String,
    #[serde(default)]
    pub reasoning: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CollectorError> {
        let fail = |reason: &str| CollectorError::Model {
            model: self.model_id.clone(),
            reason: reason.to_string(),
        };
        if self.model_id.is_empty() {
            return Err(fail("empty model_id"));
        }
        if !matches!(self.endpoint.scheme(), "http" | "https") || self.endpoint.host().is_none() {
            return Err(fail("endpoint must be an http(s) URL with a host"));
        }
        if !(self.request_timeout_secs > 0.0) {
            return Err(fail("request_timeout_secs must be positive"));
        }
        if self.max_output_tokens == 0 {
            return Err(fail("max_output_tokens must be positive"));
        }
        if !(0.0..=self.max_temperature).contains(&self.default_temperature) {
            return Err(fail("default_temperature outside the legal range"));
        }
        Ok(())
    }

    pub fn access_label(&self) -> &'static str {
        match self.access {
            Some(Access::Open) => "open",
            Some(Access::Proprietary) => "proprietary",
            None => "unknown",
        }
    }
}

/// The (model, task, intervention) triple identifying a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigKey {
    pub model_id: String,
    pub task: TaskVariant,
    pub intervention: InterventionSpec,
}

impl ConfigKey {
    pub fn id(&self) -> String {
        format!(
            "{}|{}|{}",
            self.model_id,
            self.task.key(),
            self.intervention.key()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    Timeout,
    /// `code` is 0 when no HTTP response arrived (connection failure).
    HttpError {
        code: u16,
    },
    Empty,
}

/// One raw model response as archived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub config: ConfigKey,
    pub query_index: u32,
    pub attempt_index: u8,
    pub timestamp: DateTime<Utc>,
    pub raw_text: String,
    pub transport_status: TransportStatus,
}

/// Attempts issued for one scheduled query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub attempts: Vec<AttemptRecord>,
    /// 1-based index of the first attempt that passed the probe.
    pub retained: Option<u8>,
}

/// Issues up to [`MAX_ATTEMPTS`] requests, stopping at the first response
/// accepted by `probe`. Every attempt is handed to `sink` before the next
/// one is sent; transport failures become attempts, never errors.
#[allow(clippy::too_many_arguments)]
pub fn execute_with_retries(
    transport: &dyn ChatTransport,
    model: &ModelConfig,
    request: &ChatRequest,
    key: &ConfigKey,
    query_index: u32,
    probe: &dyn Fn(&str) -> bool,
    clock: &dyn Clock,
    sink: &mut dyn FnMut(&AttemptRecord) -> Result<(), CollectorError>,
) -> Result<QueryOutcome, CollectorError> {
    execute_attempts(
        transport,
        model,
        request,
        key,
        query_index,
        MAX_ATTEMPTS,
        probe,
        clock,
        sink,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn execute_attempts(
    transport: &dyn ChatTransport,
    model: &ModelConfig,
    request: &ChatRequest,
    key: &ConfigKey,
    query_index: u32,
    max_attempts: u8,
    probe: &dyn Fn(&str) -> bool,
    clock: &dyn Clock,
    sink: &mut dyn FnMut(&AttemptRecord) -> Result<(), CollectorError>,
) -> Result<QueryOutcome, CollectorError> {
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut retained = None;
    for attempt_index in 1..=max_attempts {
        let reply = transport.send(model, request);
        let mut timestamp = clock.now();
        if let Some(prev) = attempts.last() {
            timestamp = timestamp.max(prev.timestamp);
        }
        let record = AttemptRecord {
            config: key.clone(),
            query_index,
            attempt_index,
            timestamp,
            raw_text: reply.text,
            transport_status: reply.status,
        };
        sink(&record)?;
        let accepted = record.transport_status == TransportStatus::Ok && probe(&record.raw_text);
        attempts.push(record);
        if accepted {
            retained = Some(attempt_index);
            break;
        }
    }
    Ok(QueryOutcome { attempts, retained })
}

/// Shared handles needed to execute queries.
#[derive(Clone)]
pub struct Collector {
    pub transport: Arc<dyn ChatTransport>,
    pub clock: Arc<dyn Clock>,
    pub limiter: Arc<RateLimiter>,
    pub archive: Arc<std::sync::Mutex<ArchiveWriter>>,
}

impl Collector {
    pub fn new(
        transport: Arc<dyn ChatTransport>,
        clock: Arc<dyn Clock>,
        archive: ArchiveWriter,
    ) -> Self {
        Self {
            transport,
            limiter: Arc::new(RateLimiter::new(clock.clone())),
            clock,
            archive: Arc::new(std::sync::Mutex::new(archive)),
        }
    }

    pub fn append(&self, entry: &ArchiveEntry) -> Result<u64, CollectorError> {
        self.archive
            .lock()
            .expect("archive writer poisoned")
            .append(entry)
    }

    /// Runs one scheduled query for a configuration with the retry protocol.
    pub fn run_query(
        &self,
        planned: &PlannedConfig,
        query_index: u32,
        probe: &dyn Fn(&str) -> bool,
    ) -> Result<QueryOutcome, CollectorError> {
        self.run_with_budget(planned, query_index, MAX_ATTEMPTS, probe)
    }

    pub(crate) fn run_with_budget(
        &self,
        planned: &PlannedConfig,
        query_index: u32,
        max_attempts: u8,
        probe: &dyn Fn(&str) -> bool,
    ) -> Result<QueryOutcome, CollectorError> {
        let request = planned.request();
        let limited = LimitedTransport {
            inner: self.transport.as_ref(),
            limiter: &self.limiter,
        };
        let mut sink = |r: &AttemptRecord| {
            self.append(&ArchiveEntry::Attempt(r.clone())).map(|_| ())
        };
        execute_attempts(
            &limited,
            &planned.model,
            &request,
            &planned.key,
            query_index,
            max_attempts,
            probe,
            self.clock.as_ref(),
            &mut sink,
        )
    }
}

struct LimitedTransport<'a> {
    inner: &'a dyn ChatTransport,
    limiter: &'a RateLimiter,
}

impl ChatTransport for LimitedTransport<'_> {
    fn send(&self, model: &ModelConfig, request: &ChatRequest) -> TransportReply {
        self.limiter.wait(model);
        self.inner.send(model, request)
    }
}
