//! Instruction tuples for the three prompt schemas, plus self-supervision
//! data built from an existing taxonomy.

mod dataset;
mod supervision;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::retrieval::{CandidateSet, RetrievalError};
use crate::rng::seeded;
use crate::taxonomy::{Entity, SeedSet};

pub use dataset::{deserialize_dataset, read_dataset, serialize_dataset, write_dataset};
pub use supervision::{
    gen_parent_finding_supervision, gen_sibling_recovery_supervision, SupervisionDataset,
};

pub const PARENT_GEN_INSTRUCTION: &str =
    "Given a list of entities, output the most likely parent class for the entity given by user.";
pub const SET_EXPAND_INSTRUCTION: &str = "Given a category and an entity set belonging to this \
     category, output other entities of this category that share the same granularity as the seeds.";
pub const PARENT_OUTPUT_PREFIX: &str = "The parent class is ";
pub const EXPANSION_OUTPUT_PREFIX: &str = "The expanded entities are ";

const FIND_PARENT_PREFIX: &str = "Find the parent for ";
const SET_EXPAND_QUERY_PREFIX: &str = "Find other entities belonging to category ";
const SET_EXPAND_QUERY_MIDDLE: &str = " and sharing the same granularity as the seeds ";
const TAXO_INSTRUCTION_PREFIX: &str = "Given a set of candidate parent classes: ";
const TAXO_INSTRUCTION_SUFFIX: &str =
    ", output the most likely parent class for the entity given by user.";

/// Default upper bound on seed permutations per expansion.
pub const DEFAULT_PERMUTATION_CAP: usize = 50;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InstructError {
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("parent class text is empty")]
    EmptyParent,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("gold parent `{0}` is not among the candidates")]
    GoldNotInCandidates(String),
    #[error("taxonomy has {0} non-root node(s); need at least 2")]
    TaxonomyTooSmall(usize),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ParentGen,
    SetExpand,
    TaxoExpand,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleMeta {
    pub source_node: Option<Entity>,
    pub permutation_index: usize,
    pub shuffle_index: usize,
}

/// One (instruction, query, output) record. `output` is present for training
/// data and absent for inference prompts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionTuple {
    pub instruction: String,
    pub query: String,
    pub output: Option<String>,
    pub task: TaskKind,
    pub meta: TupleMeta,
}

impl InstructionTuple {
    pub fn is_training(&self) -> bool {
        self.output.is_some()
    }

    /// The same prompt without its answer.
    pub fn without_output(&self) -> InstructionTuple {
        InstructionTuple {
            output: None,
            ..self.clone()
        }
    }
}

fn join_surfaces<'a>(entities: impl IntoIterator<Item = &'a Entity>) -> String {
    entities
        .into_iter()
        .map(Entity::surface)
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn parent_output(parent: &Entity) -> String {
    format!("{PARENT_OUTPUT_PREFIX}{}.", parent.surface())
}

pub fn expansion_output<'a>(entities: impl IntoIterator<Item = &'a Entity>) -> String {
    format!("{EXPANSION_OUTPUT_PREFIX}{}.", join_surfaces(entities))
}

/// Ask for the class shared by `seeds`.
pub fn build_parent_gen_prompt(seeds: &SeedSet) -> Result<InstructionTuple, InstructError> {
    if seeds.is_empty() {
        return Err(InstructError::EmptySeeds);
    }
    Ok(InstructionTuple {
        instruction: PARENT_GEN_INSTRUCTION.to_string(),
        query: format!("{FIND_PARENT_PREFIX}{}.", join_surfaces(seeds.entities())),
        output: None,
        task: TaskKind::ParentGen,
        meta: TupleMeta::default(),
    })
}

/// Ask for more members of `parent` at the granularity of `seeds`.
pub fn build_set_expansion_prompt(
    parent: &str,
    seeds: &SeedSet,
) -> Result<InstructionTuple, InstructError> {
    if parent.trim().is_empty() {
        return Err(InstructError::EmptyParent);
    }
    if seeds.is_empty() {
        return Err(InstructError::EmptySeeds);
    }
    Ok(InstructionTuple {
        instruction: SET_EXPAND_INSTRUCTION.to_string(),
        query: format!(
            "{SET_EXPAND_QUERY_PREFIX}{}{SET_EXPAND_QUERY_MIDDLE}{}.",
            parent.trim(),
            join_surfaces(seeds.entities())
        ),
        output: None,
        task: TaskKind::SetExpand,
        meta: TupleMeta::default(),
    })
}

/// Ask which candidate is the parent of the query entity. With `gold` the
/// tuple becomes a training record.
pub fn build_taxo_expansion_prompt(
    candidates: &CandidateSet,
    gold: Option<&Entity>,
) -> Result<InstructionTuple, InstructError> {
    if candidates.is_empty() {
        return Err(InstructError::EmptyCandidates);
    }
    let output = match gold {
        Some(g) if !candidates.contains(g) => {
            return Err(InstructError::GoldNotInCandidates(g.surface().to_string()))
        }
        Some(g) => Some(parent_output(g)),
        None => None,
    };
    Ok(InstructionTuple {
        instruction: format!(
            "{TAXO_INSTRUCTION_PREFIX}{}{TAXO_INSTRUCTION_SUFFIX}",
            join_surfaces(candidates.candidates())
        ),
        query: format!("{FIND_PARENT_PREFIX}{}.", candidates.query().surface()),
        output,
        task: TaskKind::TaxoExpand,
        meta: TupleMeta {
            source_node: Some(candidates.query().clone()),
            ..TupleMeta::default()
        },
    })
}

/// Recover the parts of a prompt built by this module.
pub mod template {
    use super::*;

    /// Seeds of a ParentGen query.
    pub fn parent_gen_seeds(query: &str) -> Option<Vec<&str>> {
        let list = query.strip_prefix(FIND_PARENT_PREFIX)?.strip_suffix('.')?;
        Some(list.split(", ").collect())
    }

    /// `(parent, seeds)` of a SetExpand query.
    pub fn set_expansion_parts(query: &str) -> Option<(&str, Vec<&str>)> {
        let rest = query
            .strip_prefix(SET_EXPAND_QUERY_PREFIX)?
            .strip_suffix('.')?;
        let (parent, seeds) = rest.split_once(SET_EXPAND_QUERY_MIDDLE)?;
        Some((parent, seeds.split(", ").collect()))
    }

    /// Candidates of a TaxoExpand instruction.
    pub fn taxo_candidates(instruction: &str) -> Option<Vec<&str>> {
        let list = instruction
            .strip_prefix(TAXO_INSTRUCTION_PREFIX)?
            .strip_suffix(TAXO_INSTRUCTION_SUFFIX)?;
        Some(list.split(", ").collect())
    }

    /// Query entity of a TaxoExpand query.
    pub fn taxo_query_entity(query: &str) -> Option<&str> {
        query.strip_prefix(FIND_PARENT_PREFIX)?.strip_suffix('.')
    }
}

/// `m!` if it does not exceed `cap`.
fn factorial_within(m: usize, cap: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for i in 2..=m {
        acc = acc.checked_mul(i)?;
        if acc > cap {
            return None;
        }
    }
    (acc <= cap).then_some(acc)
}

/// Advance `v` to the next lexicographic permutation; false when done.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v
        .iter()
        .rposition(|&x| x > v[i])
        .expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Orderings of `seeds`: all `M!` in lexicographic order (of positions) when
/// that fits under `cap`, else `cap` distinct random orderings.
pub fn seed_permutations(seeds: &SeedSet, cap: usize, rng_seed: u64) -> Vec<SeedSet> {
    let m = seeds.len();
    let cap = cap.max(1);
    let to_set = |idx: &[usize]| {
        SeedSet::new(idx.iter().map(|&i| seeds.entities()[i].clone()).collect())
            .expect("permutation of a valid seed set")
    };
    let mut idx: Vec<usize> = (0..m).collect();
    if factorial_within(m, cap).is_some() {
        let mut out = vec![to_set(&idx)];
        while next_permutation(&mut idx) {
            out.push(to_set(&idx));
        }
        return out;
    }
    let mut rng = seeded(rng_seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cap);
    while out.len() < cap {
        idx.shuffle(&mut rng);
        if seen.insert(idx.clone()) {
            out.push(to_set(&idx));
        }
    }
    out
}

/// `r` orderings of the same candidates, reproducible from `rng_seed`.
pub fn shuffle_candidates(candidates: &CandidateSet, r: usize, rng_seed: u64) -> Vec<CandidateSet> {
    let mut rng = seeded(rng_seed);
    (0..r)
        .map(|_| {
            let mut order = candidates.candidates().to_vec();
            order.shuffle(&mut rng);
            candidates
                .reordered(order)
                .expect("shuffle is a permutation")
        })
        .collect()
}
