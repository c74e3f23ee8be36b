use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::collector::{
    replay, run_calibration, ArchiveHeader, ArchiveWriter, ChatTransport, Clock, Collector,
    HttpTransport, Replay, RunnerState, SystemClock,
};
use crate::config::AuditConfig;
use crate::linkage::match_name;
use crate::metrics::author_factuality;
use crate::parser::{Label, Parser};
use crate::stats::{select_temperature, StatsError, TemperatureStats};
use crate::tasks::TEMPERATURE_SWEEP;

use super::{
    corpus_fingerprint, csv_bytes, ensure_dir, failed, fmt_num, invalid, label_archive,
    load_corpus_for, load_parser, write_output, PipelineError,
};

/// Repeated single-attempt queries per (model, task, temperature).
pub const CALIBRATION_REPEATS: u32 = 3;

pub struct CalibrateOptions {
    /// Only analyse what is already archived.
    pub offline: bool,
    pub transport: Arc<dyn ChatTransport>,
    pub clock: Arc<dyn Clock>,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            offline: false,
            transport: Arc::new(HttpTransport::new()),
            clock: Arc::new(SystemClock),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub model: String,
    pub temperature: f64,
    pub attempts: usize,
    pub usable: usize,
    pub usable_share: f64,
    pub mean_factuality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
    /// model → selected temperature
    pub selected: BTreeMap<String, f64>,
    pub delta: f64,
}

/// Labels a calibration archive and picks one temperature per model.
pub fn analyze_calibration(
    cfg: &AuditConfig,
    parser: &Parser,
    corpus: &crate::corpus::Corpus,
    archive: &Replay,
) -> Result<CalibrationReport, PipelineError> {
    // (model, temperature bits) → (attempts, usable, errors, factuality values)
    #[derive(Default)]
    struct Acc {
        attempts: usize,
        usable: usize,
        errors: usize,
        factuality: Vec<f64>,
    }
    let mut cells: BTreeMap<(String, u64), Acc> = BTreeMap::new();
    for (_, a, labeled) in label_archive(parser, archive) {
        if cfg.model(&a.config.model_id).is_none() {
            continue;
        }
        let t = a.config.intervention.temperature;
        let acc = cells
            .entry((a.config.model_id.clone(), t.to_bits()))
            .or_default();
        acc.attempts += 1;
        match labeled.label() {
            Label::Valid | Label::Verbose | Label::Skipped => acc.usable += 1,
            Label::ApiError => acc.errors += 1,
            _ => {}
        }
        if matches!(labeled.label(), Label::Valid | Label::Verbose) {
            let list = labeled.usable().expect("usable label");
            let matches = list
                .unique_names
                .iter()
                .map(|n| (n.clone(), match_name(n, corpus)))
                .collect();
            if let Some(f) = author_factuality(&list.unique_names, &matches) {
                acc.factuality.push(f);
            }
        }
    }

    let mut rows = Vec::new();
    let mut selected = BTreeMap::new();
    for m in &cfg.models {
        let mine: Vec<(f64, &Acc)> = cells
            .iter()
            .filter(|((id, _), _)| *id == m.model_id)
            .map(|((_, bits), acc)| (f64::from_bits(*bits), acc))
            .collect();
        let attempts: usize = mine.iter().map(|(_, a)| a.attempts).sum();
        let errors: usize = mine.iter().map(|(_, a)| a.errors).sum();
        if attempts > 0 && errors == attempts {
            return Err(failed(format!(
                "calibration for {}: every attempt failed at the transport",
                m.model_id
            )));
        }
        let mut stats = Vec::new();
        for (t, acc) in &mine {
            let share = acc.usable as f64 / acc.attempts as f64;
            let mean = (!acc.factuality.is_empty())
                .then(|| acc.factuality.iter().sum::<f64>() / acc.factuality.len() as f64);
            rows.push(CalibrationRow {
                model: m.model_id.clone(),
                temperature: *t,
                attempts: acc.attempts,
                usable: acc.usable,
                usable_share: share,
                mean_factuality: mean,
            });
            stats.push(TemperatureStats {
                temperature: *t,
                usable_share: share,
                mean_factuality: mean,
            });
        }
        let sweep: Vec<TemperatureStats> = stats
            .into_iter()
            .filter(|s| TEMPERATURE_SWEEP.contains(&s.temperature))
            .collect();
        let pick = match select_temperature(&sweep, cfg.calibration_delta) {
            Ok(t) => t,
            Err(StatsError::IncompleteSweep(t)) => {
                return Err(invalid(format!(
                    "calibration for {}: no attempts at temperature {t:.2}",
                    m.model_id
                )))
            }
            Err(e) => return Err(invalid(format!("calibration for {}: {e}", m.model_id))),
        };
        selected.insert(m.model_id.clone(), pick);
    }
    Ok(CalibrationReport {
        rows,
        selected,
        delta: cfg.calibration_delta,
    })
}

fn calibration_archive(cfg: &AuditConfig, cli: Option<&Path>) -> Result<PathBuf, PipelineError> {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.calibration_archive.clone())
        .ok_or_else(|| invalid("no calibration archive given (--archive or calibration_archive)"))
}

pub fn run_calibrate(
    cfg: &AuditConfig,
    archive: Option<&Path>,
    out_dir: &Path,
    opts: &CalibrateOptions,
) -> Result<CalibrationReport, PipelineError> {
    let path = calibration_archive(cfg, archive)?;
    let corpus = load_corpus_for(cfg)?;
    let parser = load_parser(cfg)?;
    let catalog = cfg.load_catalog().map_err(invalid)?;
    let configs = cfg
        .calibration_configs(&catalog, &TEMPERATURE_SWEEP)
        .map_err(invalid)?;

    if !opts.offline {
        let already = if path.exists() {
            RunnerState::from_replay(&replay(&path).map_err(failed)?)
        } else {
            RunnerState::default()
        };
        let mut header = ArchiveHeader::new(
            opts.clock.now(),
            serde_json::json!({ "purpose": "calibration", "repeats": CALIBRATION_REPEATS }),
        );
        header.corpus_hash = Some(corpus_fingerprint(cfg)?);
        let writer = ArchiveWriter::open(&path, header).map_err(failed)?;
        let collector = Collector::new(opts.transport.clone(), opts.clock.clone(), writer);
        let n = run_calibration(&collector, &configs, CALIBRATION_REPEATS, &already)
            .map_err(failed)?;
        log::info!("calibration issued {n} attempts");
    } else if !path.exists() {
        return Err(invalid(format!("archive not found: {}", path.display())));
    }

    let archived = replay(&path).map_err(failed)?;
    if let Some(t) = &archived.truncation {
        log::warn!("calibration archive truncated at offset {}: {}", t.offset, t.reason);
    }
    let report = analyze_calibration(cfg, &parser, &corpus, &archived)?;

    let out = ensure_dir(out_dir)?;
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.2}", r.temperature),
                r.attempts.to_string(),
                r.usable.to_string(),
                fmt_num(Some(r.usable_share)),
                fmt_num(r.mean_factuality),
                (report.selected.get(&r.model) == Some(&r.temperature)).to_string(),
            ]
        })
        .collect();
    write_output(
        &out.join("calibration.csv"),
        &csv_bytes(
            &[
                "model",
                "temperature",
                "attempts",
                "usable",
                "usable_share",
                "mean_factuality",
                "selected",
            ],
            &body,
        )?,
    )?;
    let mut sel = serde_json::to_vec_pretty(&serde_json::json!({
        "delta": report.delta,
        "selected_temperatures": report.selected,
    }))
    .map_err(failed)?;
    sel.push(b'\n');
    write_output(&out.join("calibration.json"), &sel)?;
    Ok(report)
}
