//! Named metrics computed per configuration.

use std::collections::BTreeMap;

use crate::corpus::{Attribute, AttributeDistribution, Corpus};
use crate::linkage::MatchResult;
use crate::parser::{Label, UsableList};
use crate::tasks::TaskVariant;

use super::{
    author_factuality, connectedness, diversity, duplicate_rate, parity, scholarly_similarity,
    task_factuality, temporal_consistency, EmbeddingMap, FactualSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
    Neutral,
}

impl Direction {
    pub fn arrow(self) -> &'static str {
        match self {
            Self::HigherIsBetter => "↑",
            Self::LowerIsBetter => "↓",
            Self::Neutral => "",
        }
    }
}

/// A configuration-level value. Binary metrics also carry the success
/// count so groups can pool counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    /// Number of units the value averages over (attempts, queries or
    /// responses).
    pub n: usize,
    pub successes: Option<usize>,
}

impl MetricValue {
    fn binary(k: usize, n: usize) -> Option<Self> {
        (n > 0).then(|| Self {
            value: k as f64 / n as f64,
            n,
            successes: Some(k),
        })
    }

    fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        (!defined.is_empty()).then(|| Self {
            value: defined.iter().sum::<f64>() / defined.len() as f64,
            n: defined.len(),
            successes: None,
        })
    }
}

/// One retained usable response with its linkage results.
#[derive(Debug, Clone)]
pub struct ResponseEval {
    pub list: UsableList,
    pub matches: BTreeMap<String, MatchResult>,
    pub factual: FactualSet,
}

/// Everything known about one configuration.
#[derive(Debug, Clone)]
pub struct ConfigInput {
    pub task: TaskVariant,
    /// Attempt labels per query, queries in schedule order.
    pub queries: Vec<Vec<Label>>,
    /// Retained usable responses in query order.
    pub responses: Vec<ResponseEval>,
}

/// Shared read-only inputs.
pub struct MetricEnv<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: Option<&'a EmbeddingMap>,
    pub references: &'a BTreeMap<Attribute, AttributeDistribution>,
}

pub trait Metric: Send + Sync {
    fn name(&self) -> String;
    fn direction(&self) -> Direction {
        Direction::Neutral
    }
    /// Binary metrics are aggregated with Wilson intervals.
    fn is_binary(&self) -> bool {
        false
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue>;
}

struct Refusals;

impl Metric for Refusals {
    fn name(&self) -> String {
        "refusals".into()
    }
    fn is_binary(&self) -> bool {
        true
    }
    fn compute(&self, input: &ConfigInput, _: &MetricEnv) -> Option<MetricValue> {
        let all: Vec<Label> = input.queries.iter().flatten().copied().collect();
        let k = all.iter().filter(|l| **l == Label::Refused).count();
        MetricValue::binary(k, all.len())
    }
}

struct Validity;

impl Metric for Validity {
    fn name(&self) -> String {
        "validity".into()
    }
    fn direction(&self) -> Direction {
        Direction::HigherIsBetter
    }
    fn is_binary(&self) -> bool {
        true
    }
    fn compute(&self, input: &ConfigInput, _: &MetricEnv) -> Option<MetricValue> {
        let k = input
            .queries
            .iter()
            .filter(|q| q.iter().any(|l| l.is_usable()))
            .count();
        MetricValue::binary(k, input.queries.len())
    }
}

struct Duplicates;

impl Metric for Duplicates {
    fn name(&self) -> String {
        "duplicates".into()
    }
    fn direction(&self) -> Direction {
        Direction::LowerIsBetter
    }
    fn compute(&self, input: &ConfigInput, _: &MetricEnv) -> Option<MetricValue> {
        MetricValue::mean_of(input.responses.iter().map(|r| duplicate_rate(&r.list)))
    }
}

struct Consistency;

impl Metric for Consistency {
    fn name(&self) -> String {
        "consistency".into()
    }
    fn compute(&self, input: &ConfigInput, _: &MetricEnv) -> Option<MetricValue> {
        let seq: Vec<&UsableList> = input.responses.iter().map(|r| &r.list).collect();
        temporal_consistency(&seq).map(|value| MetricValue {
            value,
            n: seq.len() - 1,
            successes: None,
        })
    }
}

struct Factuality;

impl Metric for Factuality {
    fn name(&self) -> String {
        "factuality".into()
    }
    fn direction(&self) -> Direction {
        Direction::HigherIsBetter
    }
    fn compute(&self, input: &ConfigInput, _: &MetricEnv) -> Option<MetricValue> {
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| author_factuality(&r.list.unique_names, &r.matches)),
        )
    }
}

struct TaskFactuality;

impl Metric for TaskFactuality {
    fn name(&self) -> String {
        "task_factuality".into()
    }
    fn direction(&self) -> Direction {
        Direction::HigherIsBetter
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue> {
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| task_factuality(&r.factual, &input.task, env.corpus)),
        )
    }
}

struct Connectedness;

impl Metric for Connectedness {
    fn name(&self) -> String {
        "connectedness".into()
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue> {
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| connectedness(&r.factual, env.corpus)),
        )
    }
}

struct Similarity;

impl Metric for Similarity {
    fn name(&self) -> String {
        "similarity".into()
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue> {
        let emb = env.embeddings?;
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| scholarly_similarity(&r.factual, env.corpus, emb)),
        )
    }
}

struct Diversity(Attribute);

impl Metric for Diversity {
    fn name(&self) -> String {
        format!("diversity_{}", self.0.name())
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue> {
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| diversity(&r.factual, self.0, env.corpus)),
        )
    }
}

struct Parity(Attribute);

impl Metric for Parity {
    fn name(&self) -> String {
        format!("parity_{}", self.0.name())
    }
    fn direction(&self) -> Direction {
        Direction::HigherIsBetter
    }
    fn compute(&self, input: &ConfigInput, env: &MetricEnv) -> Option<MetricValue> {
        let reference = env.references.get(&self.0)?;
        MetricValue::mean_of(
            input
                .responses
                .iter()
                .map(|r| parity(&r.factual, self.0, env.corpus, reference)),
        )
    }
}

/// The built-in metrics in output column order.
pub fn default_registry() -> Vec<Box<dyn Metric>> {
    let mut out: Vec<Box<dyn Metric>> = vec![
        Box::new(Refusals),
        Box::new(Validity),
        Box::new(Duplicates),
        Box::new(Consistency),
        Box::new(Factuality),
        Box::new(TaskFactuality),
        Box::new(Connectedness),
        Box::new(Similarity),
    ];
    for a in Attribute::ALL {
        out.push(Box::new(Diversity(a)));
    }
    for a in Attribute::ALL {
        out.push(Box::new(Parity(a)));
    }
    out
}
