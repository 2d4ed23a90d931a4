//! Engine configuration loaded from a single TOML file.
//!
//! ```toml
//! workspace = "memory-root"
//! seed = 7
//!
//! [retrieval]
//! stage2_k = 2
//! token_budget = 600
//!
//! [reader]
//! url = "http://localhost:8000"
//!
//! [consolidation]
//! interval_seconds = 300
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionConfig;
use crate::error::{Error, Result};
use crate::http::Endpoint;
use crate::learning::TrainConfig;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationConfig {
    pub interval_seconds: u64,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        Self {
            interval_seconds: crate::consolidation::DEFAULT_INTERVAL.as_secs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderEndpoint {
    #[serde(flatten)]
    pub endpoint: Endpoint,
    /// Vector length the service returns.
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Root directory holding `memory/`.
    pub workspace: PathBuf,
    pub seed: u64,
    pub retrieval: RetrievalConfig,
    pub attribution: AttributionConfig,
    pub train: TrainConfig,
    pub consolidation: ConsolidationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reader: Option<Endpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedder: Option<EmbedderEndpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extractor: Option<Endpoint>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("."),
            seed: 0,
            retrieval: RetrievalConfig::default(),
            attribution: AttributionConfig::default(),
            train: TrainConfig::default(),
            consolidation: ConsolidationConfig::default(),
            reader: None,
            embedder: None,
            extractor: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.attribution.validate()?;
        self.train.validate()?;
        if self.consolidation.interval_seconds == 0 {
            return Err(Error::validation("consolidation.interval_seconds must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
