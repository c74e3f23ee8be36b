//! Audit tasks, interventions and prompt rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../assets/catalog.toml");

/// Sampling temperatures swept during calibration.
pub const TEMPERATURE_SWEEP: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

/// Citation count separating the low and high prominence constraints.
pub const PROMINENCE_CITATION_CUTOFF: u64 = 1000;

const SECTION_HEADERS: [&str; 4] = [
    "### Task ###",
    "### Instruction ###",
    "### Output Format ###",
    "### Additional Guidelines ###",
];

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task family {0:?}")]
    UnknownFamily(String),
    #[error("unknown variant {variant:?} for task family {family}")]
    UnknownVariant { family: String, variant: String },
    #[error("unknown representation constraint {0:?}")]
    UnknownConstraint(String),
    #[error("no task family selected")]
    NoFamilies,
    #[error("representation constraints apply only to the top-100 task, not {0}")]
    ConstraintNotAllowed(String),
    #[error("temperature {temperature} outside [0, {max}]")]
    TemperatureOutOfRange { temperature: f64, max: f64 },
    #[error("catalog has no criteria for {0}")]
    MissingCriteria(String),
    #[error("twins family selected but no reference persons configured")]
    NoTwinsReferences,
    #[error("invalid template catalog: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    TopK,
    Field,
    Epoch,
    Seniority,
    Twins,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::TopK,
        TaskFamily::Field,
        TaskFamily::Epoch,
        TaskFamily::Seniority,
        TaskFamily::Twins,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::TopK => "top_k",
            TaskFamily::Field => "field",
            TaskFamily::Epoch => "epoch",
            TaskFamily::Seniority => "seniority",
            TaskFamily::Twins => "twins",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TaskError> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| TaskError::UnknownFamily(s.to_string()))
    }

    /// Whether responses to this family can be checked against task criteria.
    pub fn has_criterion(self) -> bool {
        matches!(
            self,
            TaskFamily::Field | TaskFamily::Epoch | TaskFamily::Seniority
        )
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhysicsField {
    Cmmp,
    Per,
}

impl PhysicsField {
    pub fn code(self) -> &'static str {
        match self {
            PhysicsField::Cmmp => "CMMP",
            PhysicsField::Per => "PER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Epoch {
    Fifties,
    TwoThousands,
}

impl Epoch {
    pub fn label(self) -> &'static str {
        match self {
            Epoch::Fifties => "1950s",
            Epoch::TwoThousands => "2000s",
        }
    }

    /// Inclusive publication-year interval accepted for the decade.
    pub fn year_range(self) -> (i32, i32) {
        match self {
            Epoch::Fifties => (1950, 1960),
            Epoch::TwoThousands => (2000, 2010),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Seniority {
    Early,
    Senior,
}

impl Seniority {
    pub const EARLY_MAX_AGE: i32 = 10;
    pub const SENIOR_MIN_AGE: i32 = 20;

    pub fn label(self) -> &'static str {
        match self {
            Seniority::Early => "early",
            Seniority::Senior => "senior",
        }
    }

    pub fn admits(self, academic_age: i32) -> bool {
        match self {
            Seniority::Early => academic_age <= Self::EARLY_MAX_AGE,
            Seniority::Senior => academic_age >= Self::SENIOR_MIN_AGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwinKind {
    FamousScientist,
    RandomScientist,
    Politician,
    Fictional,
}

impl TwinKind {
    pub fn name(self) -> &'static str {
        match self {
            TwinKind::FamousScientist => "famous_scientist",
            TwinKind::RandomScientist => "random_scientist",
            TwinKind::Politician => "politician",
            TwinKind::Fictional => "fictional",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            TwinKind::FamousScientist,
            TwinKind::RandomScientist,
            TwinKind::Politician,
            TwinKind::Fictional,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TwinReference {
    pub kind: TwinKind,
    pub name: String,
}

/// A task family together with its contextual parameter.
///
/// Serialized as a stable key such as `top_k:100`, `epoch:1950s` or
/// `twins:politician:Kamala Harris`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskVariant {
    TopK(u32),
    Field(PhysicsField),
    Epoch(Epoch),
    Seniority(Seniority),
    Twins(TwinReference),
}

impl TaskVariant {
    pub fn family(&self) -> TaskFamily {
        match self {
            TaskVariant::TopK(_) => TaskFamily::TopK,
            TaskVariant::Field(_) => TaskFamily::Field,
            TaskVariant::Epoch(_) => TaskFamily::Epoch,
            TaskVariant::Seniority(_) => TaskFamily::Seniority,
            TaskVariant::Twins(_) => TaskFamily::Twins,
        }
    }

    pub fn key(&self) -> String {
        match self {
            TaskVariant::TopK(k) => format!("top_k:{k}"),
            TaskVariant::Field(f) => format!("field:{}", f.code()),
            TaskVariant::Epoch(e) => format!("epoch:{}", e.label()),
            TaskVariant::Seniority(s) => format!("seniority:{}", s.label()),
            TaskVariant::Twins(t) => format!("twins:{}:{}", t.kind.name(), t.name),
        }
    }

    /// The variant part of the key (everything after the family).
    pub fn variant_label(&self) -> String {
        let key = self.key();
        key.split_once(':').map(|(_, v)| v.to_string()).unwrap_or(key)
    }

    /// Built-in variants of a family; twins variants come from configuration.
    pub fn builtin(family: TaskFamily) -> Vec<TaskVariant> {
        match family {
            TaskFamily::TopK => vec![TaskVariant::TopK(5), TaskVariant::TopK(100)],
            TaskFamily::Field => vec![
                TaskVariant::Field(PhysicsField::Cmmp),
                TaskVariant::Field(PhysicsField::Per),
            ],
            TaskFamily::Epoch => vec![
                TaskVariant::Epoch(Epoch::Fifties),
                TaskVariant::Epoch(Epoch::TwoThousands),
            ],
            TaskFamily::Seniority => vec![
                TaskVariant::Seniority(Seniority::Early),
                TaskVariant::Seniority(Seniority::Senior),
            ],
            TaskFamily::Twins => vec![],
        }
    }

    fn catalog_key(&self) -> String {
        match self {
            TaskVariant::Twins(_) => "twins".to_string(),
            other => other.key(),
        }
    }
}

impl FromStr for TaskVariant {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let family = TaskFamily::parse(family)?;
        let bad = || TaskError::UnknownVariant {
            family: family.name().to_string(),
            variant: rest.to_string(),
        };
        if family == TaskFamily::Twins {
            let (kind, name) = rest.split_once(':').ok_or_else(bad)?;
            let kind = TwinKind::parse(kind).ok_or_else(bad)?;
            if name.trim().is_empty() {
                return Err(bad());
            }
            return Ok(TaskVariant::Twins(TwinReference {
                kind,
                name: name.to_string(),
            }));
        }
        TaskVariant::builtin(family)
            .into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(bad)
    }
}

impl TryFrom<String> for TaskVariant {
    type Error = TaskError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskVariant> for String {
    fn from(v: TaskVariant) -> String {
        v.key()
    }
}

impl fmt::Display for TaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub variant: TaskVariant,
    pub criteria_text: String,
}

impl TaskSpec {
    pub fn family(&self) -> TaskFamily {
        self.variant.family()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GenderTarget {
    Balanced,
    Female,
    Male,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EthnicityTarget {
    Balanced,
    Asian,
    Black,
    Hispanic,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProminenceTarget {
    /// Fewer than [`PROMINENCE_CITATION_CUTOFF`] citations.
    Low,
    /// More than [`PROMINENCE_CITATION_CUTOFF`] citations.
    High,
}

/// Representation constraint spliced into the criteria clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Constraint {
    General,
    Gender(GenderTarget),
    Ethnicity(EthnicityTarget),
    Prominence(ProminenceTarget),
}

impl Constraint {
    pub fn dimension(self) -> &'static str {
        match self {
            Constraint::General => "general",
            Constraint::Gender(_) => "gender",
            Constraint::Ethnicity(_) => "ethnicity",
            Constraint::Prominence(_) => "prominence",
        }
    }

    pub fn key(self) -> String {
        let target = match self {
            Constraint::General => return "general".into(),
            Constraint::Gender(g) => match g {
                GenderTarget::Balanced => "balanced",
                GenderTarget::Female => "female",
                GenderTarget::Male => "male",
                GenderTarget::Neutral => "neutral",
            },
            Constraint::Ethnicity(e) => match e {
                EthnicityTarget::Balanced => "balanced",
                EthnicityTarget::Asian => "asian",
                EthnicityTarget::Black => "black",
                EthnicityTarget::Hispanic => "hispanic",
                EthnicityTarget::White => "white",
            },
            Constraint::Prominence(p) => match p {
                ProminenceTarget::Low => "low",
                ProminenceTarget::High => "high",
            },
        };
        format!("{}:{target}", self.dimension())
    }
}

impl FromStr for Constraint {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        constraint_catalog()
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| TaskError::UnknownConstraint(s.to_string()))
    }
}

impl TryFrom<String> for Constraint {
    type Error = TaskError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Constraint> for String {
    fn from(c: Constraint) -> String {
        c.key()
    }
}

/// Every supported representation constraint.
pub fn constraint_catalog() -> Vec<Constraint> {
    use EthnicityTarget as E;
    use GenderTarget as G;
    let mut out = vec![Constraint::General];
    out.extend(
        [G::Balanced, G::Female, G::Male, G::Neutral]
            .into_iter()
            .map(Constraint::Gender),
    );
    out.extend(
        [E::Balanced, E::Asian, E::Black, E::Hispanic, E::White]
            .into_iter()
            .map(Constraint::Ethnicity),
    );
    out.extend(
        [ProminenceTarget::Low, ProminenceTarget::High]
            .into_iter()
            .map(Constraint::Prominence),
    );
    out
}

/// Inference-time controls applied to one prompt configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
    #[serde(default)]
    pub retrieval_enabled: bool,
}

impl InterventionSpec {
    pub fn baseline(temperature: f64) -> Self {
        Self {
            temperature,
            constraint: None,
            retrieval_enabled: false,
        }
    }

    /// Stable textual key, e.g. `t=0.50;c=gender:female;rag=1`.
    pub fn key(&self) -> String {
        let mut key = format!("t={:.2}", self.temperature);
        if let Some(c) = self.constraint {
            key.push_str(";c=");
            key.push_str(&c.key());
        }
        if self.retrieval_enabled {
            key.push_str(";rag=1");
        }
        key
    }

    pub fn validate(&self, task: &TaskVariant, max_temperature: f64) -> Result<(), TaskError> {
        if !(0.0..=max_temperature).contains(&self.temperature) {
            return Err(TaskError::TemperatureOutOfRange {
                temperature: self.temperature,
                max: max_temperature,
            });
        }
        if self.constraint.is_some() && *task != TaskVariant::TopK(100) {
            return Err(TaskError::ConstraintNotAllowed(task.key()));
        }
        Ok(())
    }
}

/// Which tasks an audit covers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSelection {
    pub families: Vec<String>,
    /// Optional allow-list of variant keys; empty means every variant.
    #[serde(default)]
    pub variants: Vec<String>,
    /// Twins reference persons; the catalog defaults apply when empty.
    #[serde(default)]
    pub twins: Vec<TwinReference>,
}

#[derive(Debug, Clone, Deserialize)]
struct BackupIndicators {
    name_only: String,
    with_years: String,
    with_doi: String,
}

/// Editable wording for every prompt element.
#[derive(Debug, Clone, Deserialize)]
pub struct TemplateCatalog {
    pub version: String,
    template: String,
    constraint_splice: String,
    criteria: BTreeMap<String, String>,
    constraints: BTreeMap<String, String>,
    backup_indicator: BackupIndicators,
    output_example: BackupIndicators,
    #[serde(default)]
    twins_references: Vec<TwinReference>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        TemplateCatalog::parse(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }
}

impl TemplateCatalog {
    pub fn parse(text: &str) -> Result<Self, TaskError> {
        let catalog: TemplateCatalog =
            toml::from_str(text).map_err(|e| TaskError::Catalog(e.to_string()))?;
        catalog.check()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaskError::Catalog(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn default_text() -> &'static str {
        DEFAULT_CATALOG
    }

    fn check(&self) -> Result<(), TaskError> {
        for placeholder in ["{criteria}", "{backup_indicator}", "{output_example}"] {
            if !self.template.contains(placeholder) {
                return Err(TaskError::Catalog(format!("template lacks {placeholder}")));
            }
        }
        let mut at = 0;
        for header in SECTION_HEADERS {
            match self.template[at..].find(header) {
                Some(pos) => at += pos + header.len(),
                None => {
                    return Err(TaskError::Catalog(format!(
                        "template lacks section {header:?} in order"
                    )))
                }
            }
        }
        if !self.constraint_splice.contains("{base}") || !self.constraint_splice.contains("{constraint}") {
            return Err(TaskError::Catalog("constraint_splice needs {base} and {constraint}".into()));
        }
        for c in constraint_catalog() {
            if !self.constraints.contains_key(&c.key()) {
                return Err(TaskError::Catalog(format!("no wording for constraint {}", c.key())));
            }
        }
        Ok(())
    }

    pub fn twins_references(&self) -> &[TwinReference] {
        &self.twins_references
    }

    pub fn task_spec(&self, variant: TaskVariant) -> Result<TaskSpec, TaskError> {
        let raw = self
            .criteria
            .get(&variant.catalog_key())
            .ok_or_else(|| TaskError::MissingCriteria(variant.key()))?;
        let criteria_text = match &variant {
            TaskVariant::Twins(t) => raw.replace("{reference}", &t.name),
            _ => raw.clone(),
        };
        if criteria_text.trim().is_empty() {
            return Err(TaskError::MissingCriteria(variant.key()));
        }
        Ok(TaskSpec {
            variant,
            criteria_text,
        })
    }

    /// Criteria clause with any representation constraint spliced in.
    pub fn criteria_clause(
        &self,
        task: &TaskSpec,
        intervention: &InterventionSpec,
    ) -> Result<String, TaskError> {
        match intervention.constraint {
            None => Ok(task.criteria_text.clone()),
            Some(c) => {
                if task.variant != TaskVariant::TopK(100) {
                    return Err(TaskError::ConstraintNotAllowed(task.variant.key()));
                }
                let clause = &self.constraints[&c.key()];
                Ok(self
                    .constraint_splice
                    .replace("{base}", &task.criteria_text)
                    .replace("{constraint}", clause))
            }
        }
    }

    pub fn render_prompt(
        &self,
        task: &TaskSpec,
        intervention: &InterventionSpec,
    ) -> Result<String, TaskError> {
        let criteria = self.criteria_clause(task, intervention)?;
        let (indicator, example) = match task.family() {
            TaskFamily::TopK | TaskFamily::Twins => (
                &self.backup_indicator.name_only,
                &self.output_example.name_only,
            ),
            TaskFamily::Epoch | TaskFamily::Seniority => (
                &self.backup_indicator.with_years,
                &self.output_example.with_years,
            ),
            TaskFamily::Field => (
                &self.backup_indicator.with_doi,
                &self.output_example.with_doi,
            ),
        };
        Ok(self
            .template
            .trim_start()
            .replace("{backup_indicator}", indicator)
            .replace("{output_example}", example)
            .replace("{criteria}", &criteria))
    }

    /// Cartesian set of selected families and variants in canonical order.
    pub fn enumerate_tasks(&self, selection: &TaskSelection) -> Result<Vec<TaskSpec>, TaskError> {
        if selection.families.is_empty() {
            return Err(TaskError::NoFamilies);
        }
        let mut families = selection
            .families
            .iter()
            .map(|f| TaskFamily::parse(f))
            .collect::<Result<Vec<_>, _>>()?;
        families.sort();
        families.dedup();
        let allowed = selection
            .variants
            .iter()
            .map(|v| v.parse::<TaskVariant>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for family in families {
            let variants = if family == TaskFamily::Twins {
                let refs = if selection.twins.is_empty() {
                    &self.twins_references
                } else {
                    &selection.twins
                };
                if refs.is_empty() {
                    return Err(TaskError::NoTwinsReferences);
                }
                refs.iter().cloned().map(TaskVariant::Twins).collect()
            } else {
                TaskVariant::builtin(family)
            };
            for v in variants {
                if allowed.is_empty() || allowed.contains(&v) {
                    out.push(self.task_spec(v)?);
                }
            }
        }
        Ok(out)
    }
}
