//! The run configuration file (TOML). Every section is optional; flags
//! given on the command line win over file values.
//!
//! ```toml
//! [generation]
//! task = "simple"
//! n_examples = 5949
//! seed = 1
//!
//! [model]
//! hops = 3
//! max_epochs = 40
//!
//! [disambiguation]
//! threshold = 0.8
//! embeddings = "crates/core/fixtures/embeddings.vec"
//!
//! [service]
//! port = 8080
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tableqa::datagen::{GenerationSpec, Task};
use tableqa::disambig::DEFAULT_THRESHOLD;
use tableqa::memnet::ModelConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generation: GenerationSection,
    pub model: ModelConfig,
    pub disambiguation: DisambiguationSection,
    pub service: ServiceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub task: Option<Task>,
    pub n_examples: Option<usize>,
    pub seed: Option<u64>,
    pub rows_per_table: Option<usize>,
}

impl GenerationSection {
    pub fn spec(&self) -> GenerationSpec {
        let mut spec = GenerationSpec::default_for(self.task.unwrap_or(Task::SimpleKey));
        if let Some(n) = self.n_examples {
            spec.n_examples = n;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(rows) = self.rows_per_table {
            spec.rows_per_table = rows;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisambiguationSection {
    pub threshold: f64,
    pub embeddings: Option<PathBuf>,
    pub subwords: Option<PathBuf>,
}

impl Default for DisambiguationSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            embeddings: None,
            subwords: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub port: u16,
    pub host: String,
    pub model: Option<PathBuf>,
    pub testset: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub top_k: usize,
    pub cors_origin: Option<String>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            port: 8080,
            host: "127.0.0.1".into(),
            model: None,
            testset: None,
            tables: None,
            top_k: tableqa_service::DEFAULT_TOP_K,
            cors_origin: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config
            .model
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if !(0.0..=1.0).contains(&config.disambiguation.threshold) {
            return Err(CliError::Usage("config: disambiguation.threshold must lie in [0, 1]".into()));
        }
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// The effective configuration, for the log.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}
