//! Subcommand implementations: collect, calibrate, audit and report.
//!
//! Collection talks to the network; everything else works from the
//! archive and corpus alone.

mod audit;
mod calibrate;
mod collect;
mod report;
pub mod synth;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::AuditConfig;
use crate::corpus::{load_corpus, Corpus};
use crate::parser::{CueClassifier, ImportedClassifier, Parser, PlaceholderSet, RefusalClassifier, RefusalTerms};

pub use audit::{
    default_out, group_value, label_archive, run_audit, AuditOptions, AuditSummary, MetricCell, MetricRow,
};
pub use calibrate::{analyze_calibration, CALIBRATION_REPEATS, run_calibrate, CalibrateOptions, CalibrationReport, CalibrationRow};
pub use collect::{archive_path, run_collect, CollectOptions};
pub use report::{read_metric_rows, render_table, run_report, ReportFormat};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad input or configuration (exit code 1).
    #[error("{0}")]
    Validation(String),
    /// A stage failed while running (exit code 2).
    #[error("{0}")]
    Failure(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Failure(_) => 2,
        }
    }
}

pub(crate) fn invalid(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

pub(crate) fn failed(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Failure(e.to_string())
}

pub fn load_config(path: &Path) -> Result<AuditConfig, PipelineError> {
    let cfg = AuditConfig::load(path).map_err(invalid)?;
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

pub fn load_corpus_for(cfg: &AuditConfig) -> Result<Corpus, PipelineError> {
    load_corpus(
        &cfg.corpus.authors,
        &cfg.corpus.edges,
        &cfg.corpus.prominence_thresholds,
    )
    .map_err(invalid)
}

/// SHA-256 over the authors file followed by the edges file.
pub fn corpus_fingerprint(cfg: &AuditConfig) -> Result<String, PipelineError> {
    let mut bytes = read_bytes(&cfg.corpus.authors)?;
    bytes.extend(read_bytes(&cfg.corpus.edges)?);
    Ok(crate::sha256_hex(&bytes))
}

pub fn load_parser(cfg: &AuditConfig) -> Result<Parser, PipelineError> {
    let p = &cfg.parser;
    let refusal_terms = match &p.refusal_terms {
        Some(path) => RefusalTerms::load(path).map_err(invalid)?,
        None => RefusalTerms::default(),
    };
    let placeholders = match &p.placeholders {
        Some(path) => PlaceholderSet::load(path).map_err(invalid)?,
        None => PlaceholderSet::default(),
    };
    let cues = match &p.refusal_cues_dir {
        Some(dir) => CueClassifier::load_dir(dir).map_err(invalid)?,
        None => CueClassifier::default(),
    };
    let classifier: Box<dyn RefusalClassifier> = match &p.imported_refusals {
        Some(path) => Box::new(ImportedClassifier::load(path, Box::new(cues)).map_err(invalid)?),
        None => Box::new(cues),
    };
    Ok(Parser {
        placeholders,
        refusal_terms,
        classifier,
    })
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Writes a file in one go and returns its SHA-256.
pub(crate) fn write_output(path: &Path, bytes: &[u8]) -> Result<String, PipelineError> {
    let mut f = fs::File::create(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| failed(format!("{}: {e}", path.display())))?;
    Ok(crate::sha256_hex(bytes))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

/// Shortest round-trip decimal; empty for undefined values.
pub(crate) fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x == 0.0 => "0".into(),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub(crate) fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(failed)?;
    for r in rows {
        w.write_record(r).map_err(failed)?;
    }
    w.into_inner().map_err(failed)
}

pub(crate) fn jsonl_bytes<T: serde::Serialize>(items: &[T]) -> Result<Vec<u8>, PipelineError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(failed)?;
        out.push(b'\n');
    }
    Ok(out)
}
