//! End-to-end pipelines: entity set expansion, taxonomy expansion and
//! seed-guided taxonomy construction, plus the shuffle-budget sweep.

mod construction;
mod set_expansion;
mod sweep;
mod taxo_expansion;

use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::instruct::{InstructError, InstructionTuple, TaskKind};
use crate::llm::{BackendError, ChatBackend, DecodingParams};
use crate::retrieval::RetrievalError;
use crate::taxonomy::{Entity, TaxonomyError};

pub use crate::eval::SweepRow;
pub use construction::{
    construct_taxonomy, evaluate_construction, Construction, ConstructionScores, LayerResult,
};
pub use set_expansion::{expand_entity_set, ExpansionResult, ScoredEntity};
pub use sweep::{shuffle_sweep, SetQuery, SweepTask};
pub use taxo_expansion::{expand_taxonomy, Prediction, TaxoExpansion};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("parent generation produced no usable answer")]
    ParentGenFailed,
    #[error("no set-expansion prompt produced a usable answer")]
    NoExpansions,
    #[error("entity `{0}` is already in the taxonomy")]
    DuplicateEntity(String),
    #[error("seed taxonomy has {0} layer(s) below ROOT; need at least 2")]
    TooFewLayers(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Decoding settings per prompt kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDecoding {
    #[serde(default = "parent_gen_default")]
    pub parent_gen: DecodingParams,
    #[serde(default = "set_expand_default")]
    pub set_expand: DecodingParams,
    #[serde(default = "taxo_expand_default")]
    pub taxo_expand: DecodingParams,
}

fn parent_gen_default() -> DecodingParams {
    DecodingParams::for_task(TaskKind::ParentGen)
}
fn set_expand_default() -> DecodingParams {
    DecodingParams::for_task(TaskKind::SetExpand)
}
fn taxo_expand_default() -> DecodingParams {
    DecodingParams::for_task(TaskKind::TaxoExpand)
}

impl Default for TaskDecoding {
    fn default() -> Self {
        TaskDecoding {
            parent_gen: parent_gen_default(),
            set_expand: set_expand_default(),
            taxo_expand: taxo_expand_default(),
        }
    }
}

impl TaskDecoding {
    pub fn get(&self, task: TaskKind) -> &DecodingParams {
        match task {
            TaskKind::ParentGen => &self.parent_gen,
            TaskKind::SetExpand => &self.set_expand,
            TaskKind::TaxoExpand => &self.taxo_expand,
        }
    }
}

/// Where construction looks for parents of newly found entities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Only the layer directly above.
    #[default]
    LayerAbove,
    /// Every node of the taxonomy built so far.
    Whole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Candidate parents retrieved per query entity.
    pub k_candidates: usize,
    /// Stop expanding once the union holds more than this many entities.
    pub target_entities: usize,
    /// Upper bound on seed permutations issued per expansion.
    pub max_shuffles: usize,
    /// Candidate shuffles per node in parent-finding supervision.
    pub r_shuffles: usize,
    pub decoding: TaskDecoding,
    pub construction_pool: CandidatePool,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_candidates: 20,
            target_entities: 400,
            max_shuffles: 50,
            r_shuffles: 10,
            decoding: TaskDecoding::default(),
            construction_pool: CandidatePool::LayerAbove,
            rng_seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("k_candidates", self.k_candidates),
            ("target_entities", self.target_entities),
            ("max_shuffles", self.max_shuffles),
            ("r_shuffles", self.r_shuffles),
        ] {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        for task in [
            TaskKind::ParentGen,
            TaskKind::SetExpand,
            TaskKind::TaxoExpand,
        ] {
            self.decoding.get(task).validate()?;
        }
        Ok(())
    }
}

/// Call the backend, asking `parse` to accept the answer; one retry with the
/// identical prompt, then `Ok(None)`.
fn complete_with_retry<C, T, P>(
    chat: &C,
    prompt: &InstructionTuple,
    cfg: &PipelineConfig,
    mut parse: P,
) -> Result<Option<T>, PipelineError>
where
    C: ChatBackend + ?Sized,
    P: FnMut(&str) -> Option<T>,
{
    let params = cfg.decoding.get(prompt.task);
    for _ in 0..2 {
        let text = chat.complete(prompt, params)?;
        if let Some(v) = parse(&text) {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

fn describe(e: &Entity) -> String {
    format!("`{}`", e.surface())
}
