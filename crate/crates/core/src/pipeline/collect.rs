use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use crate::collector::{
    replay, ArchiveHeader, ArchiveWriter, ChatTransport, Clock, Collector, HttpTransport,
    RunnerState, ScheduleRunner, StepReport, SystemClock,
};
use crate::config::AuditConfig;

use super::{corpus_fingerprint, failed, invalid, load_parser, PipelineError};

pub struct CollectOptions {
    /// Handle whatever is due now and return instead of running the plan out.
    pub once: bool,
    pub transport: Arc<dyn ChatTransport>,
    pub clock: Arc<dyn Clock>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            once: false,
            transport: Arc::new(HttpTransport::new()),
            clock: Arc::new(SystemClock),
        }
    }
}

pub fn archive_path(cfg: &AuditConfig, cli: Option<&Path>) -> Result<PathBuf, PipelineError> {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.archive.clone())
        .ok_or_else(|| invalid("no archive given (--archive or archive)"))
}

pub fn run_collect(
    cfg: &AuditConfig,
    archive: Option<&Path>,
    opts: &CollectOptions,
) -> Result<Vec<StepReport>, PipelineError> {
    let path = archive_path(cfg, archive)?;
    let plan = cfg
        .schedule
        .clone()
        .ok_or_else(|| invalid("collect needs a [schedule] section"))?;
    let catalog = cfg.load_catalog().map_err(invalid)?;
    let configs = cfg.planned_configs(&catalog).map_err(invalid)?;
    let parser = Arc::new(load_parser(cfg)?);

    let state_source = if path.exists() {
        Some(replay(&path).map_err(failed)?)
    } else {
        None
    };
    let mut state = state_source
        .as_ref()
        .map(RunnerState::from_replay)
        .unwrap_or_default();

    let defaults: Vec<_> = cfg
        .models
        .iter()
        .map(|m| {
            json!({
                "model": m.model_id,
                "max_tokens": m.max_output_tokens,
                "timeout_secs": m.request_timeout_secs,
                "default_temperature": m.default_temperature,
            })
        })
        .collect();
    let mut header = ArchiveHeader::new(opts.clock.now(), json!({ "models": defaults }));
    header.corpus_hash = Some(corpus_fingerprint(cfg)?);
    let writer = ArchiveWriter::open(&path, header).map_err(failed)?;
    let collector = Collector::new(opts.transport.clone(), opts.clock.clone(), writer);
    let probe_parser = parser.clone();
    let runner = ScheduleRunner::new(
        plan,
        configs,
        collector,
        Arc::new(move |raw: &str| probe_parser.quick_probe(raw)),
    )
    .map_err(invalid)?;

    let reports = if opts.once {
        vec![runner.step(&mut state).map_err(failed)?]
    } else {
        runner.run(&mut state).map_err(failed)?
    };
    for r in &reports {
        log::info!(
            "tick {:?}: {} queries, {} attempts, {} gaps",
            r.tick,
            r.queries,
            r.attempts,
            r.gaps
        );
    }
    Ok(reports)
}
