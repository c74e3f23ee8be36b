//! Interval estimates, group aggregation and temperature selection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::tasks::TEMPERATURE_SWEEP;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_DELTA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("successes {k} exceed trials {n}")]
    BadCount { k: usize, n: usize },
    #[error("confidence must lie in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("unknown grouping dimension {0:?}")]
    UnknownDimension(String),
    #[error("temperature sweep incomplete: missing {0}")]
    IncompleteSweep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wilson,
    StudentT,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Wilson => "wilson",
            Self::StudentT => "student_t",
        }
    }
}

/// Bounds are `None` when the sample is too small for an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub method: Method,
    pub confidence: f64,
    pub n: usize,
}

impl IntervalEstimate {
    /// Copy with bounds clipped to `[lo, hi]`, for display only.
    pub fn clipped(&self, lo: f64, hi: f64) -> Self {
        Self {
            lower: self.lower.map(|v| v.clamp(lo, hi)),
            upper: self.upper.map(|v| v.clamp(lo, hi)),
            ..*self
        }
    }
}

fn check_confidence(c: f64) -> Result<(), StatsError> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(StatsError::BadConfidence(c))
    }
}

pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

pub fn wilson_interval(k: usize, n: usize, confidence: f64) -> Result<IntervalEstimate, StatsError> {
    check_confidence(confidence)?;
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if k > n {
        return Err(StatsError::BadCount { k, n });
    }
    let z = normal_quantile(confidence);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let (lower, upper) = match k {
        0 => (0.0, (center + half).min(1.0)),
        _ if k == n => ((center - half).max(0.0), 1.0),
        _ => ((center - half).max(0.0), (center + half).min(1.0)),
    };
    Ok(IntervalEstimate {
        mean: p,
        lower: Some(lower),
        upper: Some(upper),
        method: Method::Wilson,
        confidence,
        n,
    })
}

pub fn t_interval(values: &[f64], confidence: f64) -> Result<IntervalEstimate, StatsError> {
    check_confidence(confidence)?;
    let n = values.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let mut est = IntervalEstimate {
        mean,
        lower: None,
        upper: None,
        method: Method::StudentT,
        confidence,
        n,
    };
    if n >= 2 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let t = StudentsT::new(0.0, 1.0, nf - 1.0)
            .expect("positive degrees of freedom")
            .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
        let half = t * var.sqrt() / nf.sqrt();
        est.lower = Some(mean - half);
        est.upper = Some(mean + half);
    }
    Ok(est)
}

/// Grouping dimensions for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Model,
    ModelFamily,
    Access,
    SizeClass,
    Reasoning,
    Task,
    Variant,
    Intervention,
    Temperature,
}

impl Dimension {
    pub const ALL: [Dimension; 9] = [
        Self::Model,
        Self::ModelFamily,
        Self::Access,
        Self::SizeClass,
        Self::Reasoning,
        Self::Task,
        Self::Variant,
        Self::Intervention,
        Self::Temperature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Model => "model",
            Self::ModelFamily => "model_family",
            Self::Access => "access",
            Self::SizeClass => "size_class",
            Self::Reasoning => "reasoning",
            Self::Task => "task",
            Self::Variant => "variant",
            Self::Intervention => "intervention",
            Self::Temperature => "temperature",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| StatsError::UnknownDimension(s.to_string()))
    }
}

/// One configuration's value of one metric, tagged with its group.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub group: String,
    pub metric: String,
    pub value: f64,
    /// Present for binary metrics: (successes, trials).
    pub counts: Option<(usize, usize)>,
}

/// Output row: `group, metric, mean, lower, upper, method, n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub metric: String,
    pub mean: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub method: Method,
    pub n: usize,
}

/// Groups observations by (group, metric). Binary metrics pool their counts
/// into one Wilson interval; others get a t interval over configuration
/// values. Rows come out sorted by group, then metric order of first
/// appearance.
pub fn aggregate(
    observations: &[Observation],
    confidence: f64,
) -> Result<Vec<AggregateRow>, StatsError> {
    check_confidence(confidence)?;
    let mut metric_order: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), Vec<&Observation>> = BTreeMap::new();
    for o in observations {
        if !metric_order.contains(&o.metric.as_str()) {
            metric_order.push(&o.metric);
        }
        cells.entry((&o.group, &o.metric)).or_default().push(o);
    }
    let groups: Vec<&str> = {
        let mut g: Vec<&str> = cells.keys().map(|(g, _)| *g).collect();
        g.dedup();
        g
    };
    let mut rows = Vec::new();
    for g in groups {
        for m in &metric_order {
            let Some(obs) = cells.get(&(g, *m)) else {
                continue;
            };
            let est = if obs.iter().all(|o| o.counts.is_some()) {
                let (k, n) = obs.iter().fold((0, 0), |(k, n), o| {
                    let (ok, on) = o.counts.unwrap_or_default();
                    (k + ok, n + on)
                });
                if n == 0 {
                    log::warn!("group {g} metric {m}: no trials; dropped");
                    continue;
                }
                wilson_interval(k, n, confidence)?
            } else {
                let values: Vec<f64> = obs.iter().map(|o| o.value).collect();
                t_interval(&values, confidence)?
            };
            rows.push(AggregateRow {
                group: g.to_string(),
                metric: m.to_string(),
                mean: est.mean,
                lower: est.lower,
                upper: est.upper,
                method: est.method,
                n: est.n,
            });
        }
    }
    Ok(rows)
}

/// Calibration summary for one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureStats {
    pub temperature: f64,
    pub usable_share: f64,
    pub mean_factuality: Option<f64>,
}

/// Keeps temperatures whose usable share is within `delta` of the best,
/// then takes the highest mean factuality; ties go to the lowest
/// temperature.
pub fn select_temperature(per_temp: &[TemperatureStats], delta: f64) -> Result<f64, StatsError> {
    if per_temp.is_empty() {
        return Err(StatsError::Empty);
    }
    for t in TEMPERATURE_SWEEP {
        if !per_temp.iter().any(|s| s.temperature == t) {
            return Err(StatsError::IncompleteSweep(t));
        }
    }
    let mut sorted = per_temp.to_vec();
    sorted.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    let max_share = sorted
        .iter()
        .map(|s| s.usable_share)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<&TemperatureStats> = None;
    for s in sorted.iter().filter(|s| s.usable_share >= max_share - delta) {
        let f = s.mean_factuality.unwrap_or(f64::NEG_INFINITY);
        let current = best.map(|b| b.mean_factuality.unwrap_or(f64::NEG_INFINITY));
        if current.is_none_or(|c| f > c) {
            best = Some(s);
        }
    }
    Ok(best.expect("the max-share temperature is always eligible").temperature)
}
