//! Refusal detection and categorization.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ParserError;

/// Characters of context searched before a term for a first-person subject.
pub const SUBJECT_WINDOW: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalCategory {
    Contradictory,
    LackOfInformation,
    Unethical,
    Other,
}

impl RefusalCategory {
    pub const ALL: [RefusalCategory; 4] = [
        Self::Contradictory,
        Self::LackOfInformation,
        Self::Unethical,
        Self::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Contradictory => "contradictory",
            Self::LackOfInformation => "lack_of_information",
            Self::Unethical => "unethical",
            Self::Other => "other",
        }
    }
}

impl FromStr for RefusalCategory {
    type Err = ParserError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| ParserError::Invalid(format!("unknown refusal category {s:?}")))
    }
}

/// Lowercases and folds typographic apostrophes.
pub(crate) fn fold(text: &str) -> String {
    text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'")
}

fn list_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone)]
pub struct RefusalTerms {
    standalone: Vec<String>,
    subject_bound: Vec<String>,
    subject: Regex,
}

impl Default for RefusalTerms {
    fn default() -> Self {
        Self::parse(include_str!("../../assets/refusal_terms.txt"))
    }
}

impl RefusalTerms {
    pub fn parse(text: &str) -> Self {
        let mut standalone = Vec::new();
        let mut subject_bound = Vec::new();
        for line in list_lines(text) {
            match line.strip_prefix('!') {
                Some(t) => standalone.push(fold(t.trim())),
                None => subject_bound.push(fold(line)),
            }
        }
        Self {
            standalone,
            subject_bound,
            subject: Regex::new(r"\b(i|i'm|i've|i'd|me|my|we|we're|our|as an ai)\b")
                .expect("static regex"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ParserError> {
        Ok(Self::parse(&super::read(path)?))
    }

    pub fn len(&self) -> usize {
        self.standalone.len() + self.subject_bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when a term appears and either stands alone or has a
    /// first-person subject shortly before it.
    pub fn detect(&self, raw: &str) -> bool {
        let text = fold(raw);
        if self.standalone.iter().any(|t| text.contains(t.as_str())) {
            return true;
        }
        self.subject_bound.iter().any(|term| {
            text.match_indices(term.as_str()).any(|(pos, _)| {
                if term.starts_with("i ") || term.starts_with("i'") {
                    return true;
                }
                let mut from = pos.saturating_sub(SUBJECT_WINDOW);
                while !text.is_char_boundary(from) {
                    from -= 1;
                }
                self.subject.is_match(&text[from..pos])
            })
        })
    }
}

/// Assigns a category to a text already detected as a refusal.
pub trait RefusalClassifier: Send + Sync {
    fn classify(&self, offset: u64, raw: &str) -> RefusalCategory;
}

/// Counts cue phrases per category; the most frequent category wins, ties
/// in declaration order. Texts with no cue at all (typically short
/// reasonless refusals) are `other`.
#[derive(Debug, Clone)]
pub struct CueClassifier {
    cues: Vec<(RefusalCategory, Vec<String>)>,
}

impl Default for CueClassifier {
    fn default() -> Self {
        Self::parse(&[
            (
                RefusalCategory::Contradictory,
                include_str!("../../assets/refusal_cues/contradictory.txt"),
            ),
            (
                RefusalCategory::LackOfInformation,
                include_str!("../../assets/refusal_cues/lack_of_information.txt"),
            ),
            (
                RefusalCategory::Unethical,
                include_str!("../../assets/refusal_cues/unethical.txt"),
            ),
        ])
    }
}

impl CueClassifier {
    pub fn parse(sets: &[(RefusalCategory, &str)]) -> Self {
        Self {
            cues: sets
                .iter()
                .map(|(c, text)| (*c, list_lines(text).map(fold).collect()))
                .collect(),
        }
    }

    /// Loads `contradictory.txt`, `lack_of_information.txt` and
    /// `unethical.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, ParserError> {
        let mut texts = Vec::new();
        for c in &RefusalCategory::ALL[..3] {
            texts.push((*c, super::read(&dir.join(format!("{}.txt", c.name())))?));
        }
        let refs: Vec<(RefusalCategory, &str)> =
            texts.iter().map(|(c, t)| (*c, t.as_str())).collect();
        Ok(Self::parse(&refs))
    }

    pub fn scores(&self, raw: &str) -> Vec<(RefusalCategory, usize)> {
        let text = fold(raw);
        self.cues
            .iter()
            .map(|(c, cues)| (*c, cues.iter().map(|cue| text.matches(cue.as_str()).count()).sum()))
            .collect()
    }
}

impl RefusalClassifier for CueClassifier {
    fn classify(&self, _offset: u64, raw: &str) -> RefusalCategory {
        let mut best = (RefusalCategory::Other, 0);
        for (c, n) in self.scores(raw) {
            if n > best.1 {
                best = (c, n);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ImportedLine {
    offset: u64,
    category: String,
}

/// Externally computed categories keyed by archive offset; other texts go
/// to the fallback classifier.
pub struct ImportedClassifier {
    labels: BTreeMap<u64, RefusalCategory>,
    fallback: Box<dyn RefusalClassifier>,
}

impl ImportedClassifier {
    pub fn new(labels: BTreeMap<u64, RefusalCategory>, fallback: Box<dyn RefusalClassifier>) -> Self {
        Self { labels, fallback }
    }

    /// Reads JSON Lines of `{"offset": n, "category": "unethical"}`.
    pub fn load(path: &Path, fallback: Box<dyn RefusalClassifier>) -> Result<Self, ParserError> {
        let text = super::read(path)?;
        let mut labels = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImportedLine = serde_json::from_str(line).map_err(|e| {
                ParserError::Invalid(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            labels.insert(rec.offset, rec.category.parse()?);
        }
        Ok(Self::new(labels, fallback))
    }
}

impl RefusalClassifier for ImportedClassifier {
    fn classify(&self, offset: u64, raw: &str) -> RefusalCategory {
        match self.labels.get(&offset) {
            Some(c) => *c,
            None => self.fallback.classify(offset, raw),
        }
    }
}
