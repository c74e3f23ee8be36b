use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::metrics::{default_registry, Direction};
use crate::stats::{AggregateRow, Dimension};

use super::audit::{aggregate_csv, aggregate_rows};
use super::{ensure_dir, failed, invalid, read_bytes, write_output, MetricRow, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown report format {other:?} (csv or table)")),
        }
    }
}

/// Reads `metrics.jsonl` as written by the audit.
pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>, PipelineError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricRow = serde_json::from_str(line)
            .map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(invalid(format!("{}: no metric rows", path.display())));
    }
    Ok(rows)
}

fn directions() -> BTreeMap<String, Direction> {
    default_registry()
        .iter()
        .map(|m| (m.name(), m.direction()))
        .collect()
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Long-form text table. A `*` marks the best group for metrics with a
/// preferred direction.
pub fn render_table(dim: Dimension, rows: &[AggregateRow]) -> String {
    let dirs = directions();
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in rows {
        let better = match dirs.get(&r.metric) {
            Some(Direction::HigherIsBetter) => f64::max,
            Some(Direction::LowerIsBetter) => f64::min,
            _ => continue,
        };
        best.entry(&r.metric)
            .and_modify(|b| *b = better(*b, r.mean))
            .or_insert(r.mean);
    }
    let groups: Vec<&str> = {
        let mut g: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        g.dedup();
        g
    };
    let multi = groups.len() > 1;

    let header = [dim.name(), "metric", "mean", "ci", "method", "n"];
    let mut lines: Vec<[String; 6]> = vec![header.map(String::from)];
    for r in rows {
        let arrow = dirs.get(&r.metric).map(|d| d.arrow()).unwrap_or("");
        let star = if multi && best.get(r.metric.as_str()) == Some(&r.mean) && !arrow.is_empty() {
            "*"
        } else {
            ""
        };
        lines.push([
            r.group.clone(),
            format!("{}{arrow}", r.metric),
            format!("{}{star}", fmt_cell(Some(r.mean))),
            format!("[{}, {}]", fmt_cell(r.lower), fmt_cell(r.upper)),
            r.method.name().to_string(),
            r.n.to_string(),
        ]);
    }
    let mut widths = [0usize; 6];
    for l in &lines {
        for (w, c) in widths.iter_mut().zip(l) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for l in &lines {
        let mut line = String::new();
        for (i, (c, w)) in l.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = w - c.chars().count();
            line.push_str(c);
            line.push_str(&" ".repeat(pad));
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}

/// Re-aggregates audit output. Returns the rendered tables (empty for CSV).
pub fn run_report(
    metrics: &Path,
    out_dir: &Path,
    group_by: &[Dimension],
    confidence: f64,
    format: ReportFormat,
) -> Result<String, PipelineError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence must lie in (0, 1)"));
    }
    if group_by.is_empty() {
        return Err(invalid("no grouping dimensions"));
    }
    let rows = read_metric_rows(metrics)?;
    let mut text = String::new();
    let out = match format {
        ReportFormat::Csv => Some(ensure_dir(out_dir)?),
        ReportFormat::Table => None,
    };
    for dim in group_by {
        let agg = aggregate_rows(&rows, *dim, confidence)?;
        match &out {
            Some(dir) => {
                write_output(
                    &dir.join(format!("aggregate_{}.csv", dim.name())),
                    &aggregate_csv(&agg)?,
                )?;
            }
            None => {
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(&render_table(*dim, &agg));
            }
        }
    }
    if text.is_empty() && out.is_none() {
        return Err(failed("nothing to report"));
    }
    Ok(text)
}
