use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::collector::{replay, AttemptRecord, ConfigKey, ModelConfig, Replay};
use crate::config::AuditConfig;
use crate::corpus::Attribute;
use crate::linkage::{match_name, MatchResult};
use crate::metrics::{
    build_embeddings, default_registry, ConfigInput, FactualSet, MetricEnv, ResponseEval,
};
use crate::parser::{LabeledRecord, LabeledResponse, Parser};
use crate::stats::{aggregate, AggregateRow, Dimension, Observation};

use super::{
    corpus_fingerprint, csv_bytes, ensure_dir, failed, fmt_num, invalid, jsonl_bytes,
    load_corpus_for, load_parser, write_output, PipelineError,
};

#[derive(Debug, Clone)]
pub struct AuditOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub confidence: f64,
    pub group_by: Vec<Dimension>,
}

impl AuditOptions {
    pub fn from_config(cfg: &AuditConfig) -> Self {
        Self {
            threads: None,
            confidence: cfg.confidence,
            group_by: cfg.group_by.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub name: String,
    pub value: Option<f64>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub successes: Option<usize>,
}

/// One configuration's metric values plus its grouping metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config: String,
    pub model: String,
    pub model_family: String,
    pub access: String,
    pub size_class: String,
    pub reasoning: bool,
    pub task: String,
    pub family: String,
    pub variant: String,
    pub intervention: String,
    pub temperature: f64,
    pub queries: usize,
    pub attempts: usize,
    pub usable: usize,
    pub metrics: Vec<MetricCell>,
}

/// Group label of a row under a dimension.
pub fn group_value(row: &MetricRow, dim: Dimension) -> String {
    match dim {
        Dimension::Model => row.model.clone(),
        Dimension::ModelFamily => row.model_family.clone(),
        Dimension::Access => row.access.clone(),
        Dimension::SizeClass => row.size_class.clone(),
        Dimension::Reasoning => if row.reasoning { "reasoning" } else { "non_reasoning" }.into(),
        Dimension::Task => row.family.clone(),
        Dimension::Variant => row.task.clone(),
        Dimension::Intervention => row.intervention.clone(),
        Dimension::Temperature => format!("{:.2}", row.temperature),
    }
}

fn intervention_kind(key: &ConfigKey) -> String {
    let mut parts = Vec::new();
    if let Some(c) = key.intervention.constraint {
        parts.push(format!("constraint:{}", c.key()));
    }
    if key.intervention.retrieval_enabled {
        parts.push("retrieval".to_string());
    }
    if parts.is_empty() {
        "baseline".into()
    } else {
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub configurations: usize,
    pub attempts: usize,
    pub unique_names: usize,
    pub warnings: Vec<String>,
    pub outputs: BTreeMap<String, String>,
}

/// Labels every attempt of a replayed archive, in archive order.
pub fn label_archive(parser: &Parser, replay: &Replay) -> Vec<(u64, AttemptRecord, LabeledResponse)> {
    let attempts: Vec<(u64, &AttemptRecord)> = replay.attempts().collect();
    attempts
        .par_iter()
        .map(|(off, a)| (*off, (*a).clone(), parser.label(*off, a)))
        .collect()
}

struct ConfigRun {
    key: ConfigKey,
    /// query index → attempts (offset, label) in attempt order
    queries: BTreeMap<u32, Vec<usize>>,
}

fn unknown_model(id: &str) -> ModelConfig {
    serde_json::from_value(json!({
        "model_id": id,
        "endpoint": "http://unknown.invalid/",
        "default_temperature": 0.0,
        "max_output_tokens": 1,
        "request_timeout_secs": 1.0,
    }))
    .expect("static model")
}

pub fn run_audit(
    cfg: &AuditConfig,
    archive_path: &Path,
    out_dir: &Path,
    opts: &AuditOptions,
) -> Result<AuditSummary, PipelineError> {
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(failed)?
            .install(|| audit_inner(cfg, archive_path, out_dir, opts)),
        None => audit_inner(cfg, archive_path, out_dir, opts),
    }
}

fn audit_inner(
    cfg: &AuditConfig,
    archive_path: &Path,
    out_dir: &Path,
    opts: &AuditOptions,
) -> Result<AuditSummary, PipelineError> {
    if !archive_path.exists() {
        return Err(invalid(format!("archive not found: {}", archive_path.display())));
    }
    let corpus = load_corpus_for(cfg)?;
    let parser = load_parser(cfg)?;
    let fingerprint = corpus_fingerprint(cfg)?;
    let archive_bytes = super::read_bytes(archive_path)?;
    let replay = replay(archive_path).map_err(failed)?;
    let mut warnings = Vec::new();
    if let Some(t) = &replay.truncation {
        warnings.push(format!(
            "archive truncated at offset {} (line {}): {}",
            t.offset, t.line, t.reason
        ));
    }
    if let Some(h) = &replay.header.corpus_hash {
        if *h != fingerprint {
            warnings.push(format!(
                "archive was collected against corpus {h}, auditing against {fingerprint}"
            ));
        }
    }

    let labeled = label_archive(&parser, &replay);

    let mut runs: BTreeMap<String, ConfigRun> = BTreeMap::new();
    for (i, (_, a, _)) in labeled.iter().enumerate() {
        let run = runs.entry(a.config.id()).or_insert_with(|| ConfigRun {
            key: a.config.clone(),
            queries: BTreeMap::new(),
        });
        run.queries.entry(a.query_index).or_default().push(i);
    }
    for run in runs.values_mut() {
        for attempts in run.queries.values_mut() {
            attempts.sort_by_key(|&i| (labeled[i].1.attempt_index, labeled[i].0));
        }
    }
    let mut unknown: BTreeSet<&str> = BTreeSet::new();
    for run in runs.values() {
        if cfg.model(&run.key.model_id).is_none() {
            unknown.insert(&run.key.model_id);
        }
    }
    for m in unknown {
        warnings.push(format!("model {m} is not in the configuration; metadata unknown"));
    }

    // retained = first usable attempt of each query
    let retained: BTreeMap<&str, Vec<usize>> = runs
        .iter()
        .map(|(id, run)| {
            let picks = run
                .queries
                .values()
                .filter_map(|att| att.iter().copied().find(|&i| labeled[i].2.usable().is_some()))
                .collect();
            (id.as_str(), picks)
        })
        .collect();

    let names: BTreeSet<&String> = retained
        .values()
        .flatten()
        .flat_map(|&i| labeled[i].2.usable().expect("retained").unique_names.iter())
        .collect();
    let names: Vec<&String> = names.into_iter().collect();
    let matched: Vec<MatchResult> = names.par_iter().map(|n| match_name(n, &corpus)).collect();
    let matches: BTreeMap<String, MatchResult> = names
        .iter()
        .map(|n| (*n).clone())
        .zip(matched.iter().cloned())
        .collect();

    let embeddings = match build_embeddings(&corpus, &cfg.corpus.indicators) {
        Ok(e) => Some(e),
        Err(e) => {
            warnings.push(format!("similarity disabled: {e}"));
            None
        }
    };
    let mut references = BTreeMap::new();
    for a in Attribute::ALL {
        match corpus.reference_distribution(a) {
            Ok(d) => {
                references.insert(a, d);
            }
            Err(e) => warnings.push(format!("parity for {a} disabled: {e}")),
        }
    }
    let env = MetricEnv {
        corpus: &corpus,
        embeddings: embeddings.as_ref(),
        references: &references,
    };
    let registry = default_registry();

    let run_list: Vec<(&String, &ConfigRun)> = runs.iter().collect();
    let rows: Vec<MetricRow> = run_list
        .par_iter()
        .map(|(id, run)| {
            let responses = retained[id.as_str()]
                .iter()
                .map(|&i| {
                    let list = labeled[i].2.usable().expect("retained").clone();
                    let own: BTreeMap<String, MatchResult> = list
                        .unique_names
                        .iter()
                        .map(|n| (n.clone(), matches[n].clone()))
                        .collect();
                    let factual = FactualSet::from_matches(&list.unique_names, &own, &corpus);
                    ResponseEval {
                        list,
                        matches: own,
                        factual,
                    }
                })
                .collect::<Vec<_>>();
            let input = ConfigInput {
                task: run.key.task.clone(),
                queries: run
                    .queries
                    .values()
                    .map(|att| att.iter().map(|&i| labeled[i].2.label()).collect())
                    .collect(),
                responses,
            };
            let metrics = registry
                .iter()
                .map(|m| {
                    let v = m.compute(&input, &env);
                    MetricCell {
                        name: m.name(),
                        value: v.map(|v| v.value),
                        n: v.map_or(0, |v| v.n),
                        successes: v.and_then(|v| v.successes),
                    }
                })
                .collect();
            let fallback;
            let model = match cfg.model(&run.key.model_id) {
                Some(m) => m,
                None => {
                    fallback = unknown_model(&run.key.model_id);
                    &fallback
                }
            };
            MetricRow {
                config: (*id).clone(),
                model: run.key.model_id.clone(),
                model_family: model.family.clone(),
                access: model.access_label().to_string(),
                size_class: model.size_class.clone(),
                reasoning: model.reasoning,
                task: run.key.task.key(),
                family: run.key.task.family().name().to_string(),
                variant: run.key.task.variant_label(),
                intervention: intervention_kind(&run.key),
                temperature: run.key.intervention.temperature,
                queries: input.queries.len(),
                attempts: input.queries.iter().map(Vec::len).sum(),
                usable: input.responses.len(),
                metrics,
            }
        })
        .collect();

    for w in &warnings {
        log::warn!("{w}");
    }
    let out = ensure_dir(out_dir)?;
    let mut outputs = BTreeMap::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), PipelineError> {
        let hash = write_output(&out.join(name), &bytes)?;
        outputs.insert(name.to_string(), hash);
        Ok(())
    };

    let label_records: Vec<LabeledRecord> = labeled
        .iter()
        .map(|(off, a, l)| LabeledRecord::new(*off, a, l))
        .collect();
    emit("labels.jsonl", jsonl_bytes(&label_records)?)?;
    let match_list: Vec<&MatchResult> = matches.values().collect();
    emit("matches.jsonl", jsonl_bytes(&match_list)?)?;
    emit("metrics.jsonl", jsonl_bytes(&rows)?)?;
    emit("metrics.csv", metrics_csv(&rows)?)?;
    for dim in &opts.group_by {
        let agg = aggregate_rows(&rows, *dim, opts.confidence)?;
        emit(&format!("aggregate_{}.csv", dim.name()), aggregate_csv(&agg)?)?;
    }

    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "archive": {
            "file": archive_path.file_name().map(|f| f.to_string_lossy().to_string()),
            "sha256": crate::sha256_hex(&archive_bytes),
            "format_version": replay.header.format_version,
            "records": replay.records.len(),
            "truncated_at": replay.truncation.as_ref().map(|t| t.offset),
            "corpus_hash": replay.header.corpus_hash,
        },
        "corpus": {
            "sha256": fingerprint,
            "authors": corpus.len(),
            "edges": corpus.edge_count(),
            "prominence_thresholds": cfg.corpus.prominence_thresholds,
            "indicators": cfg.corpus.indicators,
        },
        "config_sha256": cfg.source_sha256,
        "catalog_version": cfg.load_catalog().map(|c| c.version).unwrap_or_default(),
        "confidence": opts.confidence,
        "calibration_delta": cfg.calibration_delta,
        "group_by": opts.group_by,
        "embedding": embeddings.as_ref().map(|e| json!({
            "retained_components": e.retained_components,
            "explained_variance": e.explained_variance,
            "embedded_authors": e.vectors.len(),
        })),
        "configurations": rows.len(),
        "attempts": labeled.len(),
        "unique_names": matches.len(),
        "warnings": warnings,
        "outputs": outputs,
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).map_err(failed)?;
    manifest_bytes.push(b'\n');
    write_output(&out.join("manifest.json"), &manifest_bytes)?;

    Ok(AuditSummary {
        configurations: rows.len(),
        attempts: labeled.len(),
        unique_names: matches.len(),
        warnings,
        outputs,
    })
}

pub(crate) fn metrics_csv(rows: &[MetricRow]) -> Result<Vec<u8>, PipelineError> {
    let mut header: Vec<String> = [
        "config",
        "model",
        "model_family",
        "access",
        "size_class",
        "reasoning",
        "task",
        "family",
        "variant",
        "intervention",
        "temperature",
        "queries",
        "attempts",
        "usable",
    ]
    .map(String::from)
    .to_vec();
    if let Some(r) = rows.first() {
        for c in &r.metrics {
            header.push(c.name.clone());
        }
        for c in r.metrics.iter().filter(|c| c.successes.is_some() || c.name == "refusals" || c.name == "validity") {
            header.push(format!("{}_successes", c.name));
            header.push(format!("{}_n", c.name));
        }
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut rec = vec![
                r.config.clone(),
                r.model.clone(),
                r.model_family.clone(),
                r.access.clone(),
                r.size_class.clone(),
                r.reasoning.to_string(),
                r.task.clone(),
                r.family.clone(),
                r.variant.clone(),
                r.intervention.clone(),
                format!("{:.2}", r.temperature),
                r.queries.to_string(),
                r.attempts.to_string(),
                r.usable.to_string(),
            ];
            for c in &r.metrics {
                rec.push(fmt_num(c.value));
            }
            for c in r.metrics.iter().filter(|c| c.successes.is_some() || c.name == "refusals" || c.name == "validity") {
                rec.push(c.successes.map(|k| k.to_string()).unwrap_or_default());
                rec.push(c.n.to_string());
            }
            rec
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&header_refs, &body)
}

pub(crate) fn aggregate_rows(
    rows: &[MetricRow],
    dim: Dimension,
    confidence: f64,
) -> Result<Vec<AggregateRow>, PipelineError> {
    let mut obs = Vec::new();
    for r in rows {
        let group = group_value(r, dim);
        for c in &r.metrics {
            if let Some(value) = c.value {
                obs.push(Observation {
                    group: group.clone(),
                    metric: c.name.clone(),
                    value,
                    counts: c.successes.map(|k| (k, c.n)),
                });
            }
        }
    }
    let mut rows = aggregate(&obs, confidence).map_err(failed)?;
    for r in &mut rows {
        let (lo, hi) = metric_range(&r.metric);
        r.lower = r.lower.map(|x| x.clamp(lo, hi));
        r.upper = r.upper.map(|x| x.clamp(lo, hi));
    }
    Ok(rows)
}

/// Attainable range of a metric; interval bounds are clipped to it.
fn metric_range(metric: &str) -> (f64, f64) {
    if metric == "similarity" {
        (-1.0, 1.0)
    } else {
        (0.0, 1.0)
    }
}

pub(crate) fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>, PipelineError> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.group.clone(),
                r.metric.clone(),
                fmt_num(Some(r.mean)),
                fmt_num(r.lower),
                fmt_num(r.upper),
                r.method.name().to_string(),
                r.n.to_string(),
            ]
        })
        .collect();
    csv_bytes(
        &["group", "metric", "mean", "lower", "upper", "method", "n"],
        &body,
    )
}

/// Output directory for a config, defaulting to `out/` next to it.
pub fn default_out(cfg: &AuditConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| cfg.base_dir.join("out"))
}
