//! Per-response and per-configuration audit metrics.
//!
//! All values lie in [0, 1]; `None` marks an undefined value (empty input,
//! too few responses, no known attribute). Entropies use the natural log.
//!
//! A factual name whose match group holds several homonym candidates is
//! resolved as follows:
//! - connectedness and similarity use one representative per group, the
//!   candidate adjacent to the most other groups (lowest index on ties);
//! - diversity and parity spread the group's unit mass evenly over its
//!   candidates.

mod embedding;
mod registry;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::corpus::{Attribute, AttributeDistribution, Corpus};
use crate::linkage::MatchResult;
use crate::parser::{Label, UsableList};
use crate::tasks::TaskVariant;

pub use embedding::{
    build_embeddings, standardized_indicators, EmbeddingMap, Indicator,
    EXPLAINED_VARIANCE_TARGET,
};
pub use registry::{
    default_registry, ConfigInput, Direction, Metric, MetricEnv, MetricValue, ResponseEval,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("embedding: {0}")]
    Embedding(String),
}

/// Factual recommended names as groups of matched corpus indices, ordered
/// by normalized name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactualSet {
    pub groups: Vec<Vec<usize>>,
}

impl FactualSet {
    pub fn from_matches(
        unique_names: &BTreeSet<String>,
        matches: &BTreeMap<String, MatchResult>,
        corpus: &Corpus,
    ) -> Self {
        let groups = unique_names
            .iter()
            .filter_map(|n| matches.get(n))
            .filter(|m| m.is_factual())
            .map(|m| {
                let mut g: Vec<usize> = m
                    .matched_author_ids
                    .iter()
                    .filter_map(|id| corpus.index_of(id))
                    .collect();
                g.sort_unstable();
                g
            })
            .filter(|g| !g.is_empty())
            .collect();
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn ratio(k: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| k as f64 / n as f64)
}

/// Share of all attempts labeled refused.
pub fn refusal_rate(labels: &[Label]) -> Option<f64> {
    ratio(labels.iter().filter(|l| **l == Label::Refused).count(), labels.len())
}

/// Share of queries where some attempt was valid or verbose. Each inner
/// slice holds one query's attempt labels in order.
pub fn validity_rate(queries: &[Vec<Label>]) -> Option<f64> {
    ratio(
        queries
            .iter()
            .filter(|q| q.iter().any(|l| l.is_usable()))
            .count(),
        queries.len(),
    )
}

pub fn duplicate_rate(list: &UsableList) -> Option<f64> {
    ratio(list.unique_names.len(), list.len()).map(|r| 1.0 - r)
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Mean Jaccard similarity of consecutive usable responses in order.
pub fn temporal_consistency(sequence: &[&UsableList]) -> Option<f64> {
    if sequence.len() < 2 {
        return None;
    }
    let total: f64 = sequence
        .windows(2)
        .map(|w| jaccard(&w[0].unique_names, &w[1].unique_names))
        .sum();
    Some(total / (sequence.len() - 1) as f64)
}

pub fn author_factuality(
    unique_names: &BTreeSet<String>,
    matches: &BTreeMap<String, MatchResult>,
) -> Option<f64> {
    let hits = unique_names
        .iter()
        .filter(|n| matches.get(*n).is_some_and(MatchResult::is_factual))
        .count();
    ratio(hits, unique_names.len())
}

/// Whether a match group satisfies the task's criterion; `None` for
/// families without one.
pub fn criterion_check(group: &[usize], task: &TaskVariant, corpus: &Corpus) -> Option<bool> {
    let any = |f: &dyn Fn(usize) -> bool| group.iter().any(|&i| f(i));
    match task {
        TaskVariant::Field(field) => Some(any(&|i| corpus.author(i).fields.contains(field.code()))),
        TaskVariant::Epoch(epoch) => {
            let (lo, hi) = epoch.year_range();
            Some(any(&|i| {
                corpus
                    .author(i)
                    .publication_years
                    .iter()
                    .any(|y| (lo..=hi).contains(y))
            }))
        }
        TaskVariant::Seniority(s) => Some(any(&|i| {
            corpus.author(i).academic_age().is_some_and(|a| s.admits(a))
        })),
        TaskVariant::TopK(_) | TaskVariant::Twins(_) => None,
    }
}

pub fn task_factuality(factual: &FactualSet, task: &TaskVariant, corpus: &Corpus) -> Option<f64> {
    let mut pass = 0;
    for g in &factual.groups {
        if criterion_check(g, task, corpus)? {
            pass += 1;
        }
    }
    ratio(pass, factual.len())
}

/// One corpus index per group for graph and embedding metrics.
pub fn representatives(factual: &FactualSet, corpus: &Corpus) -> Vec<usize> {
    let touches = |c: usize, other: &[usize]| {
        other
            .iter()
            .any(|&d| d == c || corpus.are_coauthors(c, d))
    };
    factual
        .groups
        .iter()
        .enumerate()
        .map(|(gi, group)| {
            let mut best = (0usize, group[0]);
            for &c in group {
                let reach = factual
                    .groups
                    .iter()
                    .enumerate()
                    .filter(|(hi, h)| *hi != gi && touches(c, h))
                    .count();
                if reach > best.0 {
                    best = (reach, c);
                }
            }
            best.1
        })
        .collect()
}

/// Shannon entropy (nats) of a mass vector after normalization.
pub fn entropy(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    masses
        .iter()
        .filter(|m| **m > 0.0)
        .map(|m| {
            let p = m / total;
            -p * p.ln()
        })
        .sum()
}

/// Sizes of connected components among the representatives; two groups
/// sharing a representative are connected.
pub fn component_sizes(reps: &[usize], corpus: &Corpus) -> Vec<usize> {
    let n = reps.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if reps[i] == reps[j] || corpus.are_coauthors(reps[i], reps[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    sizes.into_values().collect()
}

/// One minus the normalized entropy of component sizes; 1 for a single
/// factual author.
pub fn connectedness_from_sizes(sizes: &[usize]) -> Option<f64> {
    let m: usize = sizes.iter().sum();
    match m {
        0 => None,
        1 => Some(1.0),
        _ => {
            let masses: Vec<f64> = sizes.iter().map(|s| *s as f64).collect();
            Some((1.0 - entropy(&masses) / (m as f64).ln()).clamp(0.0, 1.0))
        }
    }
}

pub fn connectedness(factual: &FactualSet, corpus: &Corpus) -> Option<f64> {
    connectedness_from_sizes(&component_sizes(&representatives(factual, corpus), corpus))
}

/// Mean pairwise cosine over groups whose representative has an embedding.
pub fn scholarly_similarity(
    factual: &FactualSet,
    corpus: &Corpus,
    embeddings: &EmbeddingMap,
) -> Option<f64> {
    let reps: Vec<usize> = representatives(factual, corpus)
        .into_iter()
        .filter(|r| embeddings.get(*r).is_some())
        .collect();
    mean_pairwise_cosine(&reps, embeddings)
}

pub fn mean_pairwise_cosine(nodes: &[usize], embeddings: &EmbeddingMap) -> Option<f64> {
    let n = nodes.len();
    if n < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += embeddings.cosine(nodes[i], nodes[j])?;
        }
    }
    Some((total / (n * (n - 1) / 2) as f64).clamp(-1.0, 1.0))
}

/// Category masses of a factual set; unknown candidates drop their share.
pub fn attribute_masses(
    factual: &FactualSet,
    attribute: Attribute,
    corpus: &Corpus,
) -> BTreeMap<String, f64> {
    let mut masses: BTreeMap<String, f64> = BTreeMap::new();
    for g in &factual.groups {
        let share = 1.0 / g.len() as f64;
        for &c in g {
            if let Some(cat) = corpus.category(c, attribute) {
                *masses.entry(cat).or_default() += share;
            }
        }
    }
    masses
}

/// Entropy of category proportions divided by the log of the full
/// category count.
pub fn diversity_from_masses(masses: &BTreeMap<String, f64>, category_count: usize) -> Option<f64> {
    let values: Vec<f64> = masses.values().copied().collect();
    if values.iter().sum::<f64>() <= 0.0 {
        return None;
    }
    if category_count < 2 {
        return Some(0.0);
    }
    Some((entropy(&values) / (category_count as f64).ln()).clamp(0.0, 1.0))
}

pub fn diversity(factual: &FactualSet, attribute: Attribute, corpus: &Corpus) -> Option<f64> {
    diversity_from_masses(
        &attribute_masses(factual, attribute, corpus),
        corpus.categories(attribute).len(),
    )
}

/// One minus the total variation distance between the response's
/// proportions and the reference.
pub fn parity_from_masses(
    masses: &BTreeMap<String, f64>,
    reference: &AttributeDistribution,
) -> Option<f64> {
    let total: f64 = masses.values().sum();
    if total <= 0.0 {
        return None;
    }
    let cats: BTreeSet<&String> = masses.keys().chain(reference.proportions.keys()).collect();
    let tv: f64 = cats
        .into_iter()
        .map(|c| (masses.get(c).copied().unwrap_or(0.0) / total - reference.get(c)).abs())
        .sum::<f64>()
        / 2.0;
    Some((1.0 - tv).clamp(0.0, 1.0))
}

pub fn parity(
    factual: &FactualSet,
    attribute: Attribute,
    corpus: &Corpus,
    reference: &AttributeDistribution,
) -> Option<f64> {
    parity_from_masses(&attribute_masses(factual, attribute, corpus), reference)
}
