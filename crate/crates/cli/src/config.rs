//! Pipeline configuration: built-in defaults, then an optional JSON or TOML
//! file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use scholar_intent::corpus::PreprocessConfig;
use scholar_intent::embed::SkipGramConfig;
use scholar_intent::eval::ProbeConfig;
use scholar_intent::fusion::FusionConfig;
use scholar_intent::intent::IntentConfig;
use scholar_intent::lda::LdaConfig;
use scholar_intent::sessions::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Kind};

/// Environment variable naming the directory relative paths resolve against.
pub const DATA_ROOT_ENV: &str = "SCHOLAR_INTENT_DATA";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed shared by every stochastic stage.
    pub seed: Option<u64>,
    pub preprocess: PreprocessConfig,
    pub lda: LdaSection,
    pub coherence: CoherenceSection,
    pub embed: SkipGramConfig,
    pub fusion: FusionConfig,
    pub probe: ProbeConfig,
    pub intent: IntentSection,
    pub baseline: BaselineSection,
    pub rank: RankSection,
    pub simulate: SimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaSection {
    pub k: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Minimum corpus frequency for a word to enter the dictionary.
    pub min_count: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        let d = LdaConfig::new(4);
        Self {
            k: d.k,
            alpha: d.alpha,
            beta: d.beta,
            iterations: d.iterations,
            burn_in: d.burn_in,
            min_count: 1,
        }
    }
}

impl LdaSection {
    pub fn to_config(&self, seed: u64) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceSection {
    pub candidates: Vec<usize>,
    pub top_n: usize,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        Self { candidates: vec![2, 4, 8], top_n: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentSection {
    /// Number of topics in the event log.
    pub k: usize,
    #[serde(flatten)]
    pub model: IntentConfig,
}

impl Default for IntentSection {
    fn default() -> Self {
        Self { k: 4, model: IntentConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    pub fpm_max_len: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { fpm_max_len: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankSection {
    pub k: usize,
}

impl Default for RankSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl PipelineConfig {
    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::missing(path),
            _ => CliError::new(Kind::Failure, format!("{}: {e}", path.display())),
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::new(Kind::InvalidConfig, format!("{}: {e}", path.display())))
    }
}

/// Joins relative paths onto the data root, when one is set.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub root: Option<PathBuf>,
}

impl Paths {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }
}
