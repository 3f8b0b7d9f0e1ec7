//! Engine-wide TOML configuration.
//!
//! ```toml
//! profile = "editing"          # or "default"
//! ambiguity_list_path = "ambiguous.txt"
//! edit_match_mode = "subject_relation"
//! seen_scope = "corpus"
//! snapshot_path = "memory.snap"
//!
//! [thresholds]                 # overrides on top of the profile
//! q_thr = 20
//!
//! [embedding]
//! provider = "reference_hash"
//! dimension = 256
//!
//! [[qa_exemplars]]
//! question = "Which country is Naples located in?"
//! answer = "Italy"
//! read = "(\\{MEM_READ(Naples>>country>>)-->Italy\\})"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::SeenScope;
use crate::editing::{QaExemplar, QaPrompt};
use crate::embedding::{build_provider, EmbeddingProviderConfig};
use crate::protocol::parse_read_call;
use crate::retrieval::{AmbiguityList, RetrievalThresholds};
use crate::store::{EditMatchMode, MemoryStore};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdProfile {
    #[default]
    Default,
    Editing,
}

impl ThresholdProfile {
    pub fn thresholds(self) -> RetrievalThresholds {
        match self {
            ThresholdProfile::Default => RetrievalThresholds::default(),
            ThresholdProfile::Editing => RetrievalThresholds::editing(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOverrides {
    pub tau_e: Option<f64>,
    pub tau_t: Option<f64>,
    pub tau_r: Option<f64>,
    pub q_thr: Option<usize>,
}

impl ThresholdOverrides {
    pub fn apply(&self, base: RetrievalThresholds) -> RetrievalThresholds {
        RetrievalThresholds {
            tau_e: self.tau_e.unwrap_or(base.tau_e),
            tau_t: self.tau_t.unwrap_or(base.tau_t),
            tau_r: self.tau_r.unwrap_or(base.tau_r),
            q_thr: self.q_thr.unwrap_or(base.q_thr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaExemplarConfig {
    pub question: String,
    pub answer: String,
    /// A complete read call in protocol syntax.
    #[serde(default)]
    pub read: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub profile: Option<ThresholdProfile>,
    pub thresholds: ThresholdOverrides,
    pub embedding: EmbeddingProviderConfig,
    pub ambiguity_list_path: Option<PathBuf>,
    pub edit_match_mode: EditMatchMode,
    pub seen_scope: SeenScope,
    pub snapshot_path: Option<PathBuf>,
    pub qa_exemplars: Vec<QaExemplarConfig>,
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates `path`; relative paths inside become relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.ambiguity_list_path, &mut cfg.snapshot_path]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        if let Some(p) = &cfg.ambiguity_list_path {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!(
                    "ambiguity list {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds_or(ThresholdProfile::Editing)
            .validate()
            .and_then(|_| self.thresholds().validate())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedding
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.qa_prompt()?;
        Ok(())
    }

    /// Profile thresholds with the file overrides applied.
    pub fn thresholds(&self) -> RetrievalThresholds {
        self.thresholds_or(ThresholdProfile::Default)
    }

    /// Like [`EngineConfig::thresholds`], using `fallback` when no profile is set.
    pub fn thresholds_or(&self, fallback: ThresholdProfile) -> RetrievalThresholds {
        self.thresholds
            .apply(self.profile.unwrap_or(fallback).thresholds())
    }

    /// The configured list, or the built-in one when no path is set.
    pub fn ambiguity_list(&self) -> Result<AmbiguityList, ConfigError> {
        match &self.ambiguity_list_path {
            None => Ok(AmbiguityList::default()),
            Some(p) => AmbiguityList::load(p).map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    /// The configured exemplars, or the built-in prompt when none are set.
    pub fn qa_prompt(&self) -> Result<QaPrompt, ConfigError> {
        if self.qa_exemplars.is_empty() {
            return Ok(QaPrompt::default());
        }
        let exemplars = self
            .qa_exemplars
            .iter()
            .map(|e| {
                let read = e
                    .read
                    .as_deref()
                    .map(parse_read_call)
                    .transpose()
                    .map_err(|err| ConfigError::Invalid(format!("qa exemplar read: {err}")))?;
                if read.as_ref().is_some_and(|r| r.results.is_none()) {
                    return Err(ConfigError::Invalid(
                        "qa exemplar read call has no results".into(),
                    ));
                }
                Ok(QaExemplar {
                    question: e.question.clone(),
                    answer: e.answer.clone(),
                    read,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(QaPrompt { exemplars })
    }

    /// An empty store using the configured embedder and edit match mode.
    pub fn new_store(&self) -> Result<MemoryStore, ConfigError> {
        let provider =
            build_provider(&self.embedding).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut store = MemoryStore::new(Arc::from(provider));
        store.set_edit_match_mode(self.edit_match_mode);
        Ok(store)
    }
}
