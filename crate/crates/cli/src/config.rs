//! The JSON run configuration.
//!
//! ```json
//! {
//!   "backend": {"kind": "oracle", "gold": "gold.tsv", "parent_error_rate": 0.1},
//!   "embedding": {"kind": "hash"},
//!   "pipeline": {"k_candidates": 20, "max_shuffles": 50},
//!   "rng_seed": 42
//! }
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taxo_core::embedding::HASH_EMBEDDER_DIM;
use taxo_core::llm::{RemoteConfig, RemoteEmbedder};
use taxo_core::{
    ChatBackend, EmbeddingBackend, Entity, HashEmbedder, OracleBackend, PipelineConfig, RemoteChat,
    ReplayBackend, Taxonomy,
};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Oracle {
        gold: PathBuf,
        #[serde(default)]
        parent_error_rate: f64,
        #[serde(default)]
        sibling_noise_rate: f64,
        /// Maximum entities per set-expansion answer.
        #[serde(default)]
        response_limit: Option<usize>,
    },
    Replay {
        path: PathBuf,
    },
    Remote {
        model: String,
        #[serde(default)]
        base_url: Option<String>,
        #[serde(default)]
        max_retries: Option<usize>,
        #[serde(default)]
        timeout_secs: Option<u64>,
        #[serde(default)]
        max_in_flight: Option<usize>,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    #[default]
    Hash,
    HashDim {
        dim: usize,
    },
    Remote {
        model: String,
        #[serde(default)]
        base_url: Option<String>,
        #[serde(default)]
        dim: Option<usize>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    /// Name for ROOT, overriding any label in the input taxonomy.
    #[serde(default)]
    pub root_label: Option<String>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config `{}`: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.pipeline.rng_seed = cfg.rng_seed;
        cfg.pipeline
            .validate()
            .map_err(|e| CliError::Input(format!("config `{}`: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.pipeline.rng_seed = seed;
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn root_label(&self) -> Result<Option<Entity>, CliError> {
        self.root_label
            .as_deref()
            .map(|l| Entity::new(l).map_err(|e| CliError::Input(format!("root_label: {e}"))))
            .transpose()
    }

    /// Apply the configured root label, if any.
    pub fn label(&self, t: Taxonomy) -> Result<Taxonomy, CliError> {
        Ok(match self.root_label()? {
            Some(l) => t.with_root_label(Some(l)),
            None => t,
        })
    }

    /// The oracle's gold taxonomy path, when the backend is an oracle.
    pub fn oracle_gold(&self) -> Option<PathBuf> {
        match &self.backend {
            BackendSpec::Oracle { gold, .. } => Some(self.resolve(gold)),
            _ => None,
        }
    }

    pub fn chat(&self) -> Result<Box<dyn ChatBackend>, CliError> {
        Ok(match &self.backend {
            BackendSpec::Oracle {
                gold,
                parent_error_rate,
                sibling_noise_rate,
                response_limit,
            } => {
                let t = self.label(load_taxonomy(&self.resolve(gold))?)?;
                let o = OracleBackend::new(t)
                    .with_noise(*parent_error_rate, *sibling_noise_rate)
                    .map_err(|e| CliError::Input(e.to_string()))?
                    .with_seed(self.rng_seed)
                    .with_response_limit(*response_limit);
                Box::new(o)
            }
            BackendSpec::Replay { path } => Box::new(
                ReplayBackend::load(self.resolve(path))
                    .map_err(|e| CliError::Input(e.to_string()))?,
            ),
            BackendSpec::Remote {
                model,
                base_url,
                max_retries,
                timeout_secs,
                max_in_flight,
            } => {
                let mut rc = RemoteConfig::new(model.clone());
                rc.base_url = base_url.clone();
                if let Some(v) = max_retries {
                    rc.max_retries = *v;
                }
                if let Some(v) = timeout_secs {
                    rc.timeout_secs = *v;
                }
                if let Some(v) = max_in_flight {
                    rc.max_in_flight = *v;
                }
                Box::new(RemoteChat::new(&rc.with_env()).map_err(CliError::backend)?)
            }
        })
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingBackend>, CliError> {
        embedder(&self.embedding)
    }
}

pub fn embedder(spec: &EmbeddingSpec) -> Result<Box<dyn EmbeddingBackend>, CliError> {
    Ok(match spec {
        EmbeddingSpec::Hash => Box::new(HashEmbedder::new(HASH_EMBEDDER_DIM)),
        EmbeddingSpec::HashDim { dim } => {
            if *dim < 8 {
                return Err(CliError::Input(
                    "hash embedding dim must be at least 8".into(),
                ));
            }
            Box::new(HashEmbedder::new(*dim))
        }
        EmbeddingSpec::Remote {
            model,
            base_url,
            dim,
        } => {
            let mut rc = RemoteConfig::new(model.clone());
            rc.base_url = base_url.clone();
            rc.dim = *dim;
            Box::new(RemoteEmbedder::new(&rc.with_env()).map_err(CliError::backend)?)
        }
    })
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, CliError> {
    Taxonomy::load(path).map_err(|e| CliError::Input(e.to_string()))
}
