//! Ground-truth scholar database: author records, co-authorship graph,
//! attribute reference distributions and prominence strata.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::linkage::NameIndex;

/// Quantile thresholds delimiting the low, mid, high and elite strata.
pub const DEFAULT_PROMINENCE_THRESHOLDS: [f64; 5] = [0.0, 0.5, 0.8, 0.95, 1.0];

const STRATUM_NAMES: [&str; 4] = ["low", "mid", "high", "elite"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate author_id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: edge endpoint {id:?} not found in authors")]
    UnknownEndpoint {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: self-loop edge on {id:?}")]
    SelfLoop {
        path: String,
        line: usize,
        id: String,
    },
    #[error("prominence thresholds must be strictly increasing from 0.0 to 1.0, got {0:?}")]
    BadThresholds(Vec<f64>),
    #[error("cannot assign prominence over an empty population")]
    EmptyCounts,
    #[error("academic age is undefined for an empty publication history")]
    EmptyHistory,
    #[error("every author has an unknown {0} value")]
    NoKnownValues(Attribute),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Neutral,
    Unknown,
}

impl Default for Gender {
    fn default() -> Self {
        Gender::Unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ethnicity {
    Asian,
    Black,
    White,
    Hispanic,
    AmericanIndian,
    Unknown,
}

impl Default for Ethnicity {
    fn default() -> Self {
        Ethnicity::Unknown
    }
}

impl Gender {
    pub fn label(self) -> Option<&'static str> {
        match self {
            Gender::Female => Some("female"),
            Gender::Male => Some("male"),
            Gender::Neutral => Some("neutral"),
            Gender::Unknown => None,
        }
    }
}

impl Ethnicity {
    pub fn label(self) -> Option<&'static str> {
        match self {
            Ethnicity::Asian => Some("asian"),
            Ethnicity::Black => Some("black"),
            Ethnicity::White => Some("white"),
            Ethnicity::Hispanic => Some("hispanic"),
            Ethnicity::AmericanIndian => Some("american_indian"),
            Ethnicity::Unknown => None,
        }
    }
}

/// One ground-truth scholar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub author_id: String,
    pub display_name: String,
    #[serde(default)]
    pub alternative_names: Vec<String>,
    #[serde(default)]
    pub first_name: Option<String>,
    #[serde(default)]
    pub middle_name: Option<String>,
    #[serde(default)]
    pub last_name: Option<String>,
    #[serde(default)]
    pub perceived_gender: Gender,
    #[serde(default)]
    pub perceived_ethnicity: Ethnicity,
    #[serde(default)]
    pub publication_years: Vec<i32>,
    #[serde(default)]
    pub fields: BTreeSet<String>,
    /// Missing indicators are median-imputed when building embeddings.
    #[serde(default)]
    pub n_publications: Option<u64>,
    #[serde(default)]
    pub n_citations: Option<u64>,
    #[serde(default)]
    pub h_index: Option<u64>,
}

impl AuthorRecord {
    pub fn academic_age(&self) -> Option<i32> {
        academic_age(&self.publication_years).ok()
    }

    fn normalize_text(&mut self) {
        let nfc = |s: &mut String| *s = s.nfc().collect();
        nfc(&mut self.display_name);
        self.alternative_names.iter_mut().for_each(nfc);
        for part in [
            &mut self.first_name,
            &mut self.middle_name,
            &mut self.last_name,
        ] {
            if let Some(s) = part {
                nfc(s);
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.author_id.is_empty() {
            return Err("author_id is empty".into());
        }
        if self.display_name.trim().is_empty() {
            return Err("display_name is empty".into());
        }
        if self.publication_years.windows(2).any(|w| w[0] > w[1]) {
            return Err("publication_years not sorted ascending".into());
        }
        Ok(())
    }
}

/// Categorical attributes used by the diversity and parity metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    Ethnicity,
    PubProminence,
    CitProminence,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Gender,
        Attribute::Ethnicity,
        Attribute::PubProminence,
        Attribute::CitProminence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Ethnicity => "ethnicity",
            Attribute::PubProminence => "pub_prominence",
            Attribute::CitProminence => "cit_prominence",
        }
    }

    pub fn parse(s: &str) -> Option<Attribute> {
        Attribute::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference proportions of an attribute over the corpus, unknowns excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDistribution {
    pub attribute: Attribute,
    pub proportions: BTreeMap<String, f64>,
}

impl AttributeDistribution {
    /// Builds a distribution from (possibly fractional) category masses.
    /// Returns `None` when the total mass is zero.
    pub fn from_masses(attribute: Attribute, masses: BTreeMap<String, f64>) -> Option<Self> {
        let total: f64 = masses.values().sum();
        if total <= 0.0 {
            return None;
        }
        let proportions = masses
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(k, m)| (k, m / total))
            .collect();
        Some(Self {
            attribute,
            proportions,
        })
    }

    pub fn get(&self, category: &str) -> f64 {
        self.proportions.get(category).copied().unwrap_or(0.0)
    }
}

/// Prominence stratum index into the threshold bands (0 = lowest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum(pub usize);

impl Stratum {
    pub fn name(self) -> String {
        STRATUM_NAMES
            .get(self.0)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("stratum_{}", self.0))
    }
}

/// Validated, immutable ground-truth corpus with its indices.
#[derive(Debug)]
pub struct Corpus {
    authors: Vec<AuthorRecord>,
    by_id: HashMap<String, usize>,
    adjacency: Vec<BTreeSet<usize>>,
    edge_count: usize,
    thresholds: Vec<f64>,
    pub_strata: Vec<Option<Stratum>>,
    cit_strata: Vec<Option<Stratum>>,
    name_index: NameIndex,
}

impl Corpus {
    /// Builds a corpus from in-memory records and edges given as id pairs.
    pub fn from_parts(
        authors: Vec<AuthorRecord>,
        edges: impl IntoIterator<Item = (String, String)>,
        thresholds: &[f64],
    ) -> Result<Self, CorpusError> {
        let mut builder = CorpusBuilder::new(thresholds)?;
        for (line, author) in authors.into_iter().enumerate() {
            builder.add_author(author, "<memory>", line + 1)?;
        }
        for (line, (a, b)) in edges.into_iter().enumerate() {
            builder.add_edge(&a, &b, "<memory>", line + 1)?;
        }
        Ok(builder.finish())
    }

    pub fn authors(&self) -> &[AuthorRecord] {
        &self.authors
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn author(&self, idx: usize) -> &AuthorRecord {
        &self.authors[idx]
    }

    pub fn index_of(&self, author_id: &str) -> Option<usize> {
        self.by_id.get(author_id).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, idx: usize) -> &BTreeSet<usize> {
        &self.adjacency[idx]
    }

    pub fn are_coauthors(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn stratum_count(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn name_index(&self) -> &NameIndex {
        &self.name_index
    }

    /// All categories an attribute can take (the unknown category excluded).
    pub fn categories(&self, attribute: Attribute) -> Vec<String> {
        match attribute {
            Attribute::Gender => ["female", "male", "neutral"]
                .map(String::from)
                .to_vec(),
            Attribute::Ethnicity => ["asian", "black", "white", "hispanic", "american_indian"]
                .map(String::from)
                .to_vec(),
            Attribute::PubProminence | Attribute::CitProminence => {
                (0..self.stratum_count()).map(|k| Stratum(k).name()).collect()
            }
        }
    }

    /// Category of an author for an attribute; `None` means unknown.
    pub fn category(&self, idx: usize, attribute: Attribute) -> Option<String> {
        let author = &self.authors[idx];
        match attribute {
            Attribute::Gender => author.perceived_gender.label().map(String::from),
            Attribute::Ethnicity => author.perceived_ethnicity.label().map(String::from),
            Attribute::PubProminence => self.pub_strata[idx].map(Stratum::name),
            Attribute::CitProminence => self.cit_strata[idx].map(Stratum::name),
        }
    }

    pub fn reference_distribution(
        &self,
        attribute: Attribute,
    ) -> Result<AttributeDistribution, CorpusError> {
        reference_distribution(self, attribute)
    }
}

struct CorpusBuilder {
    authors: Vec<AuthorRecord>,
    by_id: HashMap<String, usize>,
    edges: BTreeSet<(usize, usize)>,
    thresholds: Vec<f64>,
}

impl CorpusBuilder {
    fn new(thresholds: &[f64]) -> Result<Self, CorpusError> {
        validate_thresholds(thresholds)?;
        Ok(Self {
            authors: Vec::new(),
            by_id: HashMap::new(),
            edges: BTreeSet::new(),
            thresholds: thresholds.to_vec(),
        })
    }

    fn add_author(
        &mut self,
        mut author: AuthorRecord,
        path: &str,
        line: usize,
    ) -> Result<(), CorpusError> {
        author.normalize_text();
        author.validate().map_err(|reason| CorpusError::Malformed {
            path: path.to_string(),
            line,
            reason,
        })?;
        if self.by_id.contains_key(&author.author_id) {
            return Err(CorpusError::DuplicateId {
                path: path.to_string(),
                line,
                id: author.author_id,
            });
        }
        self.by_id
            .insert(author.author_id.clone(), self.authors.len());
        self.authors.push(author);
        Ok(())
    }

    fn add_edge(&mut self, a: &str, b: &str, path: &str, line: usize) -> Result<(), CorpusError> {
        let lookup = |id: &str| {
            self.by_id
                .get(id)
                .copied()
                .ok_or_else(|| CorpusError::UnknownEndpoint {
                    path: path.to_string(),
                    line,
                    id: id.to_string(),
                })
        };
        let (ia, ib) = (lookup(a)?, lookup(b)?);
        if ia == ib {
            return Err(CorpusError::SelfLoop {
                path: path.to_string(),
                line,
                id: a.to_string(),
            });
        }
        self.edges.insert((ia.min(ib), ia.max(ib)));
        Ok(())
    }

    fn finish(self) -> Corpus {
        let n = self.authors.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(a, b) in &self.edges {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let strata = |get: fn(&AuthorRecord) -> Option<u64>| -> Vec<Option<Stratum>> {
            let counts: BTreeMap<usize, u64> = self
                .authors
                .iter()
                .enumerate()
                .filter_map(|(i, a)| get(a).map(|c| (i, c)))
                .collect();
            let mut out = vec![None; n];
            if let Ok(assigned) = assign_prominence(&counts, &self.thresholds) {
                for (i, s) in assigned {
                    out[i] = Some(s);
                }
            }
            out
        };
        let pub_strata = strata(|a| a.n_publications);
        let cit_strata = strata(|a| a.n_citations);
        let name_index = NameIndex::build(&self.authors);
        Corpus {
            authors: self.authors,
            by_id: self.by_id,
            adjacency,
            edge_count: self.edges.len(),
            thresholds: self.thresholds,
            pub_strata,
            cit_strata,
            name_index,
        }
    }
}

/// Loads an authors JSON Lines file and a tab-separated edges file.
pub fn load_corpus(
    authors_source: &Path,
    edges_source: &Path,
    thresholds: &[f64],
) -> Result<Corpus, CorpusError> {
    let mut builder = CorpusBuilder::new(thresholds)?;
    let apath = authors_source.display().to_string();
    for (no, line) in read_lines(authors_source)? {
        if line.trim().is_empty() {
            continue;
        }
        let author: AuthorRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: apath.clone(),
                line: no,
                reason: e.to_string(),
            })?;
        builder.add_author(author, &apath, no)?;
    }
    let epath = edges_source.display().to_string();
    for (no, line) in read_lines(edges_source)? {
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                builder.add_edge(a, b, &epath, no)?
            }
            _ => {
                return Err(CorpusError::Malformed {
                    path: epath,
                    line: no,
                    reason: "expected two tab-separated author ids".into(),
                })
            }
        }
    }
    Ok(builder.finish())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(io_err))
        .collect()
}

fn validate_thresholds(thresholds: &[f64]) -> Result<(), CorpusError> {
    let ok = thresholds.len() >= 2
        && thresholds[0] == 0.0
        && thresholds[thresholds.len() - 1] == 1.0
        && thresholds.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(CorpusError::BadThresholds(thresholds.to_vec()))
    }
}

/// Assigns each author a prominence stratum from its empirical quantile rank.
///
/// The rank of a count is `#{c <= count} / n`, so tied authors share the rank
/// of the last tied element. Stratum `k` holds ranks in
/// `(thresholds[k], thresholds[k + 1]]`.
pub fn assign_prominence<K: Ord + Clone>(
    counts: &BTreeMap<K, u64>,
    thresholds: &[f64],
) -> Result<BTreeMap<K, Stratum>, CorpusError> {
    validate_thresholds(thresholds)?;
    if counts.is_empty() {
        return Err(CorpusError::EmptyCounts);
    }
    let mut sorted: Vec<u64> = counts.values().copied().collect();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let bands = thresholds.len() - 1;
    Ok(counts
        .iter()
        .map(|(k, &c)| {
            let at_or_below = sorted.partition_point(|&x| x <= c);
            let rank = at_or_below as f64 / n;
            let band = (0..bands)
                .find(|&b| rank > thresholds[b] && rank <= thresholds[b + 1])
                .unwrap_or(bands - 1);
            (k.clone(), Stratum(band))
        })
        .collect())
}

/// Career length in years: last minus first publication year.
pub fn academic_age(publication_years: &[i32]) -> Result<i32, CorpusError> {
    let min = publication_years.iter().min();
    let max = publication_years.iter().max();
    match (min, max) {
        (Some(lo), Some(hi)) => Ok(hi - lo),
        _ => Err(CorpusError::EmptyHistory),
    }
}

pub fn reference_distribution(
    corpus: &Corpus,
    attribute: Attribute,
) -> Result<AttributeDistribution, CorpusError> {
    let mut masses: BTreeMap<String, f64> = BTreeMap::new();
    for idx in 0..corpus.len() {
        if let Some(cat) = corpus.category(idx, attribute) {
            *masses.entry(cat).or_default() += 1.0;
        }
    }
    AttributeDistribution::from_masses(attribute, masses)
        .ok_or(CorpusError::NoKnownValues(attribute))
}
