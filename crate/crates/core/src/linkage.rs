//! Name normalization and component-wise Jaro-Winkler record linkage.
//!
//! Every candidate pair is scored on nine comparisons:
//!
//! | slot | comparison                                          | threshold |
//! |------|-----------------------------------------------------|-----------|
//! | 0    | full name vs best-matching name variant             | 0.85      |
//! | 1    | full name vs display name                           | 0.7       |
//! | 2    | full name vs longest observed name                  | 0.7       |
//! | 3    | "first last" short form vs best variant short form  | 0.7       |
//! | 4    | first vs first                                      | 0.7       |
//! | 5    | middle vs middle                                    | 0.7       |
//! | 6    | last vs last                                        | 0.7       |
//! | 7    | first vs last (swapped order)                       | 0.7       |
//! | 8    | last vs first (swapped order)                       | 0.7       |
//!
//! Slots 3-8 use the components of the best-matching variant from slot 0.
//! A component missing on either side scores 0. A candidate matches when at
//! least [`MIN_PASSING_SCORES`] slots reach their threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{AuthorRecord, Corpus};

pub const FULL_NAME_THRESHOLD: f64 = 0.85;
pub const PARTIAL_NAME_THRESHOLD: f64 = 0.7;
pub const MIN_PASSING_SCORES: usize = 5;
pub const SCORE_COUNT: usize = 9;

pub const WINKLER_SCALING: f64 = 0.1;
pub const WINKLER_PREFIX_CAP: usize = 4;

pub const SCORE_NAMES: [&str; SCORE_COUNT] = [
    "full_best",
    "full_display",
    "full_longest",
    "first_last_short",
    "first_first",
    "middle_middle",
    "last_last",
    "first_last",
    "last_first",
];

pub const DEFAULT_TITLES: &[&str] = &[
    "dr", "prof", "professor", "mr", "mrs", "ms", "mx", "miss", "sir", "dame", "lord", "lady",
    "phd", "dphil", "md", "frs",
];

pub fn thresholds() -> [f64; SCORE_COUNT] {
    let mut t = [PARTIAL_NAME_THRESHOLD; SCORE_COUNT];
    t[0] = FULL_NAME_THRESHOLD;
    t
}

/// Lower-cases, strips accents and titles, replaces punctuation with spaces.
pub fn normalize_name(raw: &str) -> String {
    normalize_name_with(raw, DEFAULT_TITLES)
}

pub fn normalize_name_with(raw: &str, titles: &[&str]) -> String {
    // A few code points only settle after a second pass (case mapping can
    // emit new combining marks), so iterate to a fixed point.
    let mut current = normalize_once(raw, titles);
    for _ in 0..4 {
        let next = normalize_once(&current, titles);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_once(raw: &str, titles: &[&str]) -> String {
    let folded: String = raw
        .to_lowercase()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    folded
        .split_whitespace()
        .filter(|tok| !titles.contains(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plain Jaro similarity over Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    jaro_chars(&a, &b)
}

fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_hit[j] && b[j] == ca {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_hit).filter(|(_, h)| **h).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_hit).filter(|(_, h)| **h).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity with prefix scaling 0.1 and prefix cap 4.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let j = jaro_chars(&a, &b);
    let prefix = a
        .iter()
        .zip(&b)
        .take(WINKLER_PREFIX_CAP)
        .take_while(|(x, y)| x == y)
        .count();
    j + prefix as f64 * WINKLER_SCALING * (1.0 - j)
}

/// A normalized name split into whitespace components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameParts {
    pub full: String,
    pub first: Option<String>,
    pub middle: Option<String>,
    pub last: Option<String>,
}

impl NameParts {
    /// Splits an already-normalized name: one token is a last name, two are
    /// first and last, anything in between is the middle name.
    pub fn split(normalized: &str) -> Self {
        let tokens: Vec<&str> = normalized.split_whitespace().collect();
        let (first, middle, last) = match tokens.len() {
            0 => (None, None, None),
            1 => (None, None, Some(tokens[0].to_string())),
            n => (
                Some(tokens[0].to_string()),
                (n > 2).then(|| tokens[1..n - 1].join(" ")),
                Some(tokens[n - 1].to_string()),
            ),
        };
        Self {
            full: tokens.join(" "),
            first,
            middle,
            last,
        }
    }

    fn from_components(first: &Option<String>, middle: &Option<String>, last: &Option<String>) -> Option<Self> {
        let norm = |s: &Option<String>| {
            s.as_deref()
                .map(normalize_name)
                .filter(|s| !s.is_empty())
        };
        let (first, middle, last) = (norm(first), norm(middle), norm(last));
        let full = [&first, &middle, &last]
            .into_iter()
            .flatten()
            .cloned()
            .collect::<Vec<_>>()
            .join(" ");
        if full.is_empty() {
            return None;
        }
        Some(Self {
            full,
            first,
            middle,
            last,
        })
    }

    pub fn short_form(&self) -> String {
        [&self.first, &self.last]
            .into_iter()
            .flatten()
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn component_score(a: &Option<String>, b: &Option<String>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => jaro_winkler(a, b),
        _ => 0.0,
    }
}

#[derive(Debug, Clone)]
struct AuthorNames {
    variants: Vec<NameParts>,
    display: usize,
    longest: usize,
}

/// Name variants of every corpus author plus a blocking index over them.
///
/// Blocking is recall-safe for the full-name threshold. With `p` the shared
/// prefix length and `r` the length ratio (shorter over longer), Jaro is at
/// most `(2 + r) / 3` and Jaro-Winkler at most `j + 0.1 p (1 - j)`. Reaching
/// 0.85 therefore needs `r >= 0.25` when the first characters agree
/// (`p <= 4`) and `r >= 0.55` when they differ (`p = 0`). Candidates are
/// drawn from both bands, plus every author sharing the query's last token.
#[derive(Debug, Clone, Default)]
pub struct NameIndex {
    authors: Vec<AuthorNames>,
    /// (author, variant) keyed by (first char, char length).
    by_initial_len: HashMap<(char, usize), Vec<(usize, usize)>>,
    /// (author, variant) keyed by char length.
    by_len: BTreeMap<usize, Vec<(usize, usize)>>,
    by_last: HashMap<String, BTreeSet<usize>>,
}

impl NameIndex {
    pub fn build(records: &[AuthorRecord]) -> Self {
        let mut index = NameIndex::default();
        for (aidx, rec) in records.iter().enumerate() {
            let mut variants: Vec<NameParts> = Vec::new();
            let mut push = |parts: NameParts| {
                if !parts.full.is_empty() && !variants.iter().any(|v| v == &parts) {
                    variants.push(parts);
                }
            };
            push(NameParts::split(&normalize_name(&rec.display_name)));
            if let Some(p) =
                NameParts::from_components(&rec.first_name, &rec.middle_name, &rec.last_name)
            {
                push(p);
            }
            for alt in &rec.alternative_names {
                push(NameParts::split(&normalize_name(alt)));
            }
            if variants.is_empty() {
                // display_name normalized to nothing (punctuation only)
                variants.push(NameParts::split(""));
            }
            let longest = variants
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| {
                    let la = a.full.chars().count();
                    let lb = b.full.chars().count();
                    la.cmp(&lb).then(j.cmp(i))
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            for (vidx, v) in variants.iter().enumerate() {
                let len = v.full.chars().count();
                if let Some(c) = v.full.chars().next() {
                    index
                        .by_initial_len
                        .entry((c, len))
                        .or_default()
                        .push((aidx, vidx));
                }
                index.by_len.entry(len).or_default().push((aidx, vidx));
                if let Some(last) = &v.last {
                    index.by_last.entry(last.clone()).or_default().insert(aidx);
                }
            }
            index.authors.push(AuthorNames {
                variants,
                display: 0,
                longest,
            });
        }
        index
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    /// Authors that survive blocking for a normalized query name.
    pub fn candidates(&self, query: &NameParts) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let q = query.full.chars().count();
        let Some(initial) = query.full.chars().next() else {
            return out;
        };
        // same initial: 4 * shorter >= longer
        for len in q.div_ceil(4)..=q * 4 {
            if let Some(v) = self.by_initial_len.get(&(initial, len)) {
                out.extend(v.iter().map(|(a, _)| *a));
            }
        }
        // any initial: 20 * shorter >= 11 * longer
        let lo = (11 * q).div_ceil(20);
        let hi = 20 * q / 11;
        for (_, v) in self.by_len.range(lo..=hi) {
            out.extend(v.iter().map(|(a, _)| *a));
        }
        if let Some(last) = &query.last {
            if let Some(set) = self.by_last.get(last) {
                out.extend(set.iter().copied());
            }
        }
        out
    }

    /// Nine-slot score vector of a query against one author.
    pub fn score(&self, query: &NameParts, author: usize) -> [f64; SCORE_COUNT] {
        let names = &self.authors[author];
        let (best_idx, best_full) = names
            .variants
            .iter()
            .enumerate()
            .map(|(i, v)| (i, jaro_winkler(&query.full, &v.full)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let best = &names.variants[best_idx];
        let display = &names.variants[names.display];
        let longest = &names.variants[names.longest];
        [
            best_full,
            jaro_winkler(&query.full, &display.full),
            jaro_winkler(&query.full, &longest.full),
            jaro_winkler(&query.short_form(), &best.short_form()),
            component_score(&query.first, &best.first),
            component_score(&query.middle, &best.middle),
            component_score(&query.last, &best.last),
            component_score(&query.first, &best.last),
            component_score(&query.last, &best.first),
        ]
    }

    /// Highest full-name score of a query against any variant of an author.
    pub fn full_score(&self, query: &NameParts, author: usize) -> f64 {
        self.authors[author]
            .variants
            .iter()
            .map(|v| jaro_winkler(&query.full, &v.full))
            .fold(0.0, f64::max)
    }
}

pub fn passing_scores(scores: &[f64; SCORE_COUNT]) -> usize {
    scores
        .iter()
        .zip(thresholds())
        .filter(|(s, t)| **s >= *t)
        .count()
}

/// Which corpus authors are scored for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    #[default]
    Blocking,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub recommended_name: String,
    pub matched_author_ids: BTreeSet<String>,
    /// Scores of the best matched candidate, or of the closest candidate
    /// when nothing matched.
    pub score_vector: [f64; SCORE_COUNT],
    pub best_candidate: Option<String>,
    /// Set when the name normalized to the empty string.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty_name: bool,
}

impl MatchResult {
    pub fn is_factual(&self) -> bool {
        !self.matched_author_ids.is_empty()
    }
}

pub fn match_name(recommended: &str, corpus: &Corpus) -> MatchResult {
    match_name_with(recommended, corpus, CandidateSource::Blocking)
}

pub fn match_name_with(recommended: &str, corpus: &Corpus, source: CandidateSource) -> MatchResult {
    let normalized = normalize_name(recommended);
    let query = NameParts::split(&normalized);
    let mut result = MatchResult {
        recommended_name: normalized,
        matched_author_ids: BTreeSet::new(),
        score_vector: [0.0; SCORE_COUNT],
        best_candidate: None,
        empty_name: false,
    };
    if query.full.is_empty() {
        result.empty_name = true;
        return result;
    }
    let index = corpus.name_index();
    let candidates: Vec<usize> = match source {
        CandidateSource::Blocking => index.candidates(&query).into_iter().collect(),
        CandidateSource::Exhaustive => (0..index.author_count()).collect(),
    };
    // rank by (matched, passes, full score); earliest author wins ties
    let mut best: Option<(bool, usize, f64, usize, [f64; SCORE_COUNT])> = None;
    for author in candidates {
        let scores = index.score(&query, author);
        let passes = passing_scores(&scores);
        let matched = passes >= MIN_PASSING_SCORES;
        if matched {
            result
                .matched_author_ids
                .insert(corpus.author(author).author_id.clone());
        }
        let better = match &best {
            None => true,
            Some((m, p, f, _, _)) => (matched, passes, scores[0]) > (*m, *p, *f),
        };
        if better {
            best = Some((matched, passes, scores[0], author, scores));
        }
    }
    if let Some((_, _, _, author, scores)) = best {
        result.score_vector = scores;
        result.best_candidate = Some(corpus.author(author).author_id.clone());
    }
    result
}
