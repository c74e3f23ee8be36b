//! Labels raw responses into seven categories and extracts recommendation
//! lists.
//!
//! | label | meaning |
//! |---|---|
//! | valid | clean JSON array only |
//! | verbose | a clean array plus surrounding text |
//! | fixed | an array recovered by the repair grammar |
//! | skipped | an array mixing names with placeholders (placeholders dropped) |
//! | refused | explicit non-compliance and no list |
//! | api_error | transport timeout or HTTP failure |
//! | invalid | anything else, including empty output |
//!
//! Only valid and verbose responses carry a [`UsableList`], the one type
//! metrics accept.

mod extract;
mod refusal;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::{AttemptRecord, TransportStatus};
use crate::linkage::normalize_name;

pub use extract::{
    extract_recommendations, repair_recommendations, Extraction, ExtractionFailure, Repair,
    Repaired, NAME_KEYS,
};
pub use refusal::{
    CueClassifier, ImportedClassifier, RefusalCategory, RefusalClassifier, RefusalTerms,
    SUBJECT_WINDOW,
};

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn read(path: &Path) -> Result<String, ParserError> {
    std::fs::read_to_string(path).map_err(|source| ParserError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Valid,
    Verbose,
    Fixed,
    Skipped,
    Refused,
    ApiError,
    Invalid,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Self::Valid,
        Self::Verbose,
        Self::Fixed,
        Self::Skipped,
        Self::Refused,
        Self::ApiError,
        Self::Invalid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Valid => "valid",
            Self::Verbose => "verbose",
            Self::Fixed => "fixed",
            Self::Skipped => "skipped",
            Self::Refused => "refused",
            Self::ApiError => "api_error",
            Self::Invalid => "invalid",
        }
    }

    pub fn is_usable(self) -> bool {
        matches!(self, Self::Valid | Self::Verbose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub raw_name: String,
    /// Every other field of the element (years, DOI, ...).
    pub extras: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub entries: Vec<Recommendation>,
    /// Normalized names; empty normalizations are left out.
    pub unique_names: BTreeSet<String>,
}

impl RecommendationList {
    pub fn new(entries: Vec<Recommendation>) -> Self {
        let unique_names = entries
            .iter()
            .map(|e| normalize_name(&e.raw_name))
            .filter(|n| !n.is_empty())
            .collect();
        Self {
            entries,
            unique_names,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A list from a valid or verbose response. Only the parser constructs it.
#[derive(Debug, Clone, PartialEq)]
pub struct UsableList(RecommendationList);

impl UsableList {
    pub fn list(&self) -> &RecommendationList {
        &self.0
    }

    #[cfg(test)]
    pub(crate) fn for_tests(list: RecommendationList) -> Self {
        Self(list)
    }
}

impl std::ops::Deref for UsableList {
    type Target = RecommendationList;

    fn deref(&self) -> &RecommendationList {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabeledResponse {
    Valid(UsableList),
    Verbose(UsableList),
    Fixed {
        list: RecommendationList,
        repairs: Vec<Repair>,
    },
    Skipped {
        list: RecommendationList,
        dropped: usize,
    },
    Refused(RefusalCategory),
    ApiError(TransportStatus),
    Invalid(Option<ExtractionFailure>),
}

impl LabeledResponse {
    pub fn label(&self) -> Label {
        match self {
            Self::Valid(_) => Label::Valid,
            Self::Verbose(_) => Label::Verbose,
            Self::Fixed { .. } => Label::Fixed,
            Self::Skipped { .. } => Label::Skipped,
            Self::Refused(_) => Label::Refused,
            Self::ApiError(_) => Label::ApiError,
            Self::Invalid(_) => Label::Invalid,
        }
    }

    pub fn usable(&self) -> Option<&UsableList> {
        match self {
            Self::Valid(l) | Self::Verbose(l) => Some(l),
            _ => None,
        }
    }

    pub fn recommendations(&self) -> Option<&RecommendationList> {
        match self {
            Self::Valid(l) | Self::Verbose(l) => Some(l.list()),
            Self::Fixed { list, .. } | Self::Skipped { list, .. } => Some(list),
            _ => None,
        }
    }

    pub fn refusal_category(&self) -> Option<RefusalCategory> {
        match self {
            Self::Refused(c) => Some(*c),
            _ => None,
        }
    }
}

/// Case-insensitive patterns marking template or filler names.
#[derive(Debug, Clone)]
pub struct PlaceholderSet {
    patterns: Vec<Regex>,
}

impl Default for PlaceholderSet {
    fn default() -> Self {
        Self::parse(include_str!("../../assets/placeholders.txt")).expect("bundled patterns")
    }
}

impl PlaceholderSet {
    pub fn parse(text: &str) -> Result<Self, ParserError> {
        let patterns = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                RegexBuilder::new(l)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| ParserError::Invalid(format!("placeholder pattern {l:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { patterns })
    }

    pub fn load(path: &Path) -> Result<Self, ParserError> {
        Self::parse(&read(path)?)
    }

    pub fn is_placeholder(&self, name: &str) -> bool {
        let t = name.trim();
        normalize_name(t).is_empty() || self.patterns.iter().any(|p| p.is_match(t))
    }
}

/// Configured labeler: placeholder patterns, refusal terms and a refusal
/// classifier.
pub struct Parser {
    pub placeholders: PlaceholderSet,
    pub refusal_terms: RefusalTerms,
    pub classifier: Box<dyn RefusalClassifier>,
}

impl Default for Parser {
    fn default() -> Self {
        Self {
            placeholders: PlaceholderSet::default(),
            refusal_terms: RefusalTerms::default(),
            classifier: Box::new(CueClassifier::default()),
        }
    }
}

impl Parser {
    /// Cheap check used for retry decisions: a list is extractable without
    /// repair and holds no placeholder. Agrees with `label` on
    /// valid/verbose for transport-ok text.
    pub fn quick_probe(&self, raw: &str) -> bool {
        match extract_recommendations(raw) {
            Ok(e) => !e
                .list
                .entries
                .iter()
                .any(|r| self.placeholders.is_placeholder(&r.raw_name)),
            Err(_) => false,
        }
    }

    pub fn detect_refusal(&self, raw: &str) -> bool {
        self.refusal_terms.detect(raw)
    }

    pub fn classify_refusal(&self, offset: u64, raw: &str) -> RefusalCategory {
        self.classifier.classify(offset, raw)
    }

    fn split_placeholders(&self, list: RecommendationList) -> (RecommendationList, usize) {
        let before = list.entries.len();
        let kept: Vec<Recommendation> = list
            .entries
            .into_iter()
            .filter(|r| !self.placeholders.is_placeholder(&r.raw_name))
            .collect();
        let dropped = before - kept.len();
        (RecommendationList::new(kept), dropped)
    }

    pub fn label(&self, offset: u64, attempt: &AttemptRecord) -> LabeledResponse {
        self.label_text(offset, attempt.transport_status, &attempt.raw_text)
    }

    pub fn label_text(&self, offset: u64, status: TransportStatus, raw: &str) -> LabeledResponse {
        match status {
            TransportStatus::Ok => {}
            TransportStatus::Empty => return LabeledResponse::Invalid(None),
            other => return LabeledResponse::ApiError(other),
        }
        let strict = extract_recommendations(raw);
        let failure = match strict {
            Ok(e) => {
                let (list, dropped) = self.split_placeholders(e.list.clone());
                if dropped == 0 {
                    let usable = UsableList(e.list);
                    return if e.verbose {
                        LabeledResponse::Verbose(usable)
                    } else {
                        LabeledResponse::Valid(usable)
                    };
                }
                if !list.is_empty() {
                    return LabeledResponse::Skipped { list, dropped };
                }
                None
            }
            Err(f) => Some(f),
        };
        if failure.is_some() {
            if let Some(r) = repair_recommendations(raw) {
                let (list, _) = self.split_placeholders(r.list);
                if !list.is_empty() {
                    return LabeledResponse::Fixed {
                        list,
                        repairs: r.repairs,
                    };
                }
            }
        }
        if self.detect_refusal(raw) {
            return LabeledResponse::Refused(self.classify_refusal(offset, raw));
        }
        LabeledResponse::Invalid(failure)
    }
}

/// One line of the labeled-response export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub offset: u64,
    pub config: String,
    pub query_index: u32,
    pub attempt_index: u8,
    pub label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub repairs: Vec<Repair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_placeholders: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refusal_category: Option<RefusalCategory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<ExtractionFailure>,
}

impl LabeledRecord {
    pub fn new(offset: u64, attempt: &AttemptRecord, labeled: &LabeledResponse) -> Self {
        let mut rec = Self {
            offset,
            config: attempt.config.id(),
            query_index: attempt.query_index,
            attempt_index: attempt.attempt_index,
            label: labeled.label(),
            names: labeled
                .recommendations()
                .map(|l| l.entries.iter().map(|e| e.raw_name.clone()).collect()),
            repairs: Vec::new(),
            dropped_placeholders: None,
            refusal_category: labeled.refusal_category(),
            failure: None,
        };
        match labeled {
            LabeledResponse::Fixed { repairs, .. } => rec.repairs = repairs.clone(),
            LabeledResponse::Skipped { dropped, .. } => rec.dropped_placeholders = Some(*dropped),
            LabeledResponse::Invalid(f) => rec.failure = *f,
            _ => {}
        }
        rec
    }
}
