//! Audit configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::{ConfigKey, ModelConfig, PlannedConfig, SchedulePlan};
use crate::corpus::DEFAULT_PROMINENCE_THRESHOLDS;
use crate::metrics::Indicator;
use crate::stats::{Dimension, DEFAULT_CONFIDENCE, DEFAULT_DELTA};
use crate::tasks::{Constraint, InterventionSpec, TaskSelection, TaskSpec, TemplateCatalog};

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn default_thresholds() -> Vec<f64> {
    DEFAULT_PROMINENCE_THRESHOLDS.to_vec()
}

fn default_indicators() -> Vec<Indicator> {
    Indicator::DEFAULT.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub authors: PathBuf,
    pub edges: PathBuf,
    #[serde(default = "default_thresholds")]
    pub prominence_thresholds: Vec<f64>,
    #[serde(default = "default_indicators")]
    pub indicators: Vec<Indicator>,
}

/// Optional replacements for the bundled parser assets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserPaths {
    pub refusal_terms: Option<PathBuf>,
    pub refusal_cues_dir: Option<PathBuf>,
    pub placeholders: Option<PathBuf>,
    /// JSON Lines of externally assigned refusal categories.
    pub imported_refusals: Option<PathBuf>,
}

/// An intervention template. A missing temperature means the model's
/// default (calibrated) temperature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionEntry {
    pub temperature: Option<f64>,
    pub constraint: Option<Constraint>,
    #[serde(default)]
    pub retrieval_enabled: bool,
    /// Restricts the entry to these task variant keys.
    #[serde(default)]
    pub tasks: Vec<String>,
    /// Restricts the entry to these model ids.
    #[serde(default)]
    pub models: Vec<String>,
}

fn default_group_by() -> Vec<Dimension> {
    vec![
        Dimension::Model,
        Dimension::Access,
        Dimension::Task,
        Dimension::Intervention,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub corpus: CorpusPaths,
    pub models: Vec<ModelConfig>,
    pub tasks: TaskSelection,
    #[serde(default)]
    pub interventions: Vec<InterventionEntry>,
    pub schedule: Option<SchedulePlan>,
    pub archive: Option<PathBuf>,
    pub calibration_archive: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub parser: ParserPaths,
    #[serde(default = "default_delta")]
    pub calibration_delta: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_group_by")]
    pub group_by: Vec<Dimension>,
    /// Directory the file was loaded from.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// SHA-256 of the configuration text.
    #[serde(skip)]
    pub source_sha256: String,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

impl AuditConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AuditConfig =
            toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.source_sha256 = crate::sha256_hex(text.as_bytes());
        cfg.resolve_paths();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self) {
        let base = self.base_dir.clone();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.authors);
        fix(&mut self.corpus.edges);
        for p in [
            &mut self.archive,
            &mut self.calibration_archive,
            &mut self.out_dir,
            &mut self.catalog,
            &mut self.parser.refusal_terms,
            &mut self.parser.refusal_cues_dir,
            &mut self.parser.placeholders,
            &mut self.parser.imported_refusals,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    pub fn load_catalog(&self) -> Result<TemplateCatalog, ConfigError> {
        match &self.catalog {
            Some(p) => TemplateCatalog::load(p).map_err(|e| ConfigError(e.to_string())),
            None => Ok(TemplateCatalog::default()),
        }
    }

    /// Checks everything that can be checked without network access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut must_exist = vec![&self.corpus.authors, &self.corpus.edges];
        for p in [
            &self.catalog,
            &self.parser.refusal_terms,
            &self.parser.refusal_cues_dir,
            &self.parser.placeholders,
            &self.parser.imported_refusals,
        ]
        .into_iter()
        .flatten()
        {
            must_exist.push(p);
        }
        for p in must_exist {
            if !p.exists() {
                return Err(ConfigError(format!("path not found: {}", p.display())));
            }
        }
        if self.models.is_empty() {
            return Err(ConfigError("no models configured".into()));
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            m.validate().map_err(|e| ConfigError(e.to_string()))?;
            if !ids.insert(&m.model_id) {
                return Err(ConfigError(format!("duplicate model {}", m.model_id)));
            }
        }
        for e in &self.interventions {
            for id in &e.models {
                if !ids.contains(id) {
                    return Err(ConfigError(format!("intervention names unknown model {id}")));
                }
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(ConfigError("confidence must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.calibration_delta) {
            return Err(ConfigError("calibration_delta must lie in [0, 1)".into()));
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        self.planned_configs(&self.load_catalog()?)?;
        Ok(())
    }

    pub fn task_specs(&self, catalog: &TemplateCatalog) -> Result<Vec<TaskSpec>, ConfigError> {
        catalog
            .enumerate_tasks(&self.tasks)
            .map_err(|e| ConfigError(e.to_string()))
    }

    fn entries(&self) -> Vec<InterventionEntry> {
        if self.interventions.is_empty() {
            vec![InterventionEntry::default()]
        } else {
            self.interventions.clone()
        }
    }

    /// Every (model, task, intervention) configuration in canonical order:
    /// models as listed, tasks as enumerated, interventions as listed.
    pub fn planned_configs(
        &self,
        catalog: &TemplateCatalog,
    ) -> Result<Vec<PlannedConfig>, ConfigError> {
        let tasks = self.task_specs(catalog)?;
        let entries = self.entries();
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for model in &self.models {
            for task in &tasks {
                for e in &entries {
                    if !e.models.is_empty() && !e.models.contains(&model.model_id) {
                        continue;
                    }
                    if !e.tasks.is_empty() && !e.tasks.contains(&task.variant.key()) {
                        continue;
                    }
                    let intervention = InterventionSpec {
                        temperature: e.temperature.unwrap_or(model.default_temperature),
                        constraint: e.constraint,
                        retrieval_enabled: e.retrieval_enabled,
                    };
                    let fail = |msg: String| {
                        ConfigError(format!(
                            "{} / {} / {}: {msg}",
                            model.model_id,
                            task.variant.key(),
                            intervention.key()
                        ))
                    };
                    intervention
                        .validate(&task.variant, model.max_temperature)
                        .map_err(|err| fail(err.to_string()))?;
                    if intervention.retrieval_enabled && !model.supports_retrieval {
                        return Err(fail("model does not support retrieval".into()));
                    }
                    let prompt = catalog
                        .render_prompt(task, &intervention)
                        .map_err(|err| fail(err.to_string()))?;
                    let key = ConfigKey {
                        model_id: model.model_id.clone(),
                        task: task.variant.clone(),
                        intervention,
                    };
                    if seen.insert(key.id()) {
                        out.push(PlannedConfig {
                            key,
                            model: model.clone(),
                            prompt,
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(ConfigError("configuration selects no prompt configurations".into()));
        }
        Ok(out)
    }

    /// Baseline configurations for every swept temperature.
    pub fn calibration_configs(
        &self,
        catalog: &TemplateCatalog,
        temperatures: &[f64],
    ) -> Result<Vec<PlannedConfig>, ConfigError> {
        let tasks = self.task_specs(catalog)?;
        let mut out = Vec::new();
        for model in &self.models {
            for task in &tasks {
                for &t in temperatures {
                    if t > model.max_temperature {
                        continue;
                    }
                    let intervention = InterventionSpec::baseline(t);
                    let prompt = catalog
                        .render_prompt(task, &intervention)
                        .map_err(|e| ConfigError(e.to_string()))?;
                    out.push(PlannedConfig {
                        key: ConfigKey {
                            model_id: model.model_id.clone(),
                            task: task.variant.clone(),
                            intervention,
                        },
                        model: model.clone(),
                        prompt,
                    });
                }
            }
        }
        Ok(out)
    }
}
