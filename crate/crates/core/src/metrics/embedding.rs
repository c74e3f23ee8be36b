//! PCA embeddings of scholarly indicators.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

use super::MetricError;

/// Share of total variance the retained components must reach.
pub const EXPLAINED_VARIANCE_TARGET: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    NPublications,
    NCitations,
    HIndex,
    AcademicAge,
}

impl Indicator {
    pub const DEFAULT: [Indicator; 4] = [
        Self::NPublications,
        Self::NCitations,
        Self::HIndex,
        Self::AcademicAge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NPublications => "n_publications",
            Self::NCitations => "n_citations",
            Self::HIndex => "h_index",
            Self::AcademicAge => "academic_age",
        }
    }

    pub fn value(self, corpus: &Corpus, idx: usize) -> Option<f64> {
        let a = corpus.author(idx);
        match self {
            Self::NPublications => a.n_publications.map(|v| v as f64),
            Self::NCitations => a.n_citations.map(|v| v as f64),
            Self::HIndex => a.h_index.map(|v| v as f64),
            Self::AcademicAge => a.academic_age().map(|v| v.max(0) as f64),
        }
    }
}

/// Unit-norm embedding per corpus author index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    pub vectors: BTreeMap<usize, Vec<f64>>,
    pub retained_components: usize,
    pub explained_variance: f64,
}

impl EmbeddingMap {
    pub fn get(&self, idx: usize) -> Option<&[f64]> {
        self.vectors.get(&idx).map(Vec::as_slice)
    }

    pub fn cosine(&self, a: usize, b: usize) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        Some(x.iter().zip(y).map(|(p, q)| p * q).sum())
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Standardized `log1p` indicator matrix, one row per author. Columns with
/// no observed value or zero variance are dropped.
pub fn standardized_indicators(
    corpus: &Corpus,
    indicators: &[Indicator],
) -> Result<DMatrix<f64>, MetricError> {
    let n = corpus.len();
    if n < 2 {
        return Err(MetricError::Embedding("fewer than two authors".into()));
    }
    if indicators.is_empty() {
        return Err(MetricError::Embedding("empty indicator set".into()));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for ind in indicators {
        let raw: Vec<Option<f64>> = (0..n).map(|i| ind.value(corpus, i)).collect();
        let mut present: Vec<f64> = raw.iter().flatten().copied().collect();
        let Some(fill) = median(&mut present) else {
            log::warn!("indicator {} has no observed values; dropped", ind.name());
            continue;
        };
        let col: Vec<f64> = raw.iter().map(|v| v.unwrap_or(fill).ln_1p()).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var <= 1e-24 {
            log::warn!("indicator {} has zero variance; dropped", ind.name());
            continue;
        }
        let sd = var.sqrt();
        columns.push(col.iter().map(|v| (v - mean) / sd).collect());
    }
    if columns.is_empty() {
        return Err(MetricError::Embedding(
            "every indicator column is constant or missing".into(),
        ));
    }
    Ok(DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]))
}

pub fn build_embeddings(
    corpus: &Corpus,
    indicators: &[Indicator],
) -> Result<EmbeddingMap, MetricError> {
    let z = standardized_indicators(corpus, indicators)?;
    let n = z.nrows();
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let mut k = 0;
    let mut cum = 0.0;
    while k < values.len() {
        cum += values[k];
        k += 1;
        if cum / total >= EXPLAINED_VARIANCE_TARGET - 1e-12 {
            break;
        }
    }
    let basis = DMatrix::from_fn(z.ncols(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    let projected = z * basis;
    let mut vectors = BTreeMap::new();
    for (i, row) in projected.row_iter().enumerate() {
        let norm = row.norm();
        if norm > 1e-12 {
            vectors.insert(i, row.iter().map(|v| v / norm).collect());
        }
    }
    Ok(EmbeddingMap {
        vectors,
        retained_components: k,
        explained_variance: cum / total,
    })
}
