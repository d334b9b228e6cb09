use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{complete_with_retry, describe, PipelineConfig, PipelineError};
use crate::embedding::EmbeddingBackend;
use crate::instruct::{build_parent_gen_prompt, build_set_expansion_prompt, seed_permutations};
use crate::llm::{parse_expansion_response, parse_generated_parent, ChatBackend};
use crate::retrieval::rank_entities;
use crate::taxonomy::{Entity, SeedSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub entity: Entity,
    pub score: f64,
}

/// Ranked output of one set expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub seeds: Vec<Entity>,
    pub parent_used: Entity,
    /// New entities, best first. Never contains a seed.
    pub ranked: Vec<ScoredEntity>,
    pub permutations_used: usize,
    /// Distinct entities parsed from all answers, seeds included.
    pub raw_union_size: usize,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl ExpansionResult {
    pub fn entities(&self) -> Vec<Entity> {
        self.ranked.iter().map(|s| s.entity.clone()).collect()
    }
}

/// Generate (or take) the seeds' parent class, then query one seed
/// permutation at a time, pooling answers until the pool exceeds
/// `target_entities`, `max_shuffles` prompts were issued, or permutations
/// run out. The pool is ranked by similarity to the parent class.
pub fn expand_entity_set<C, E>(
    seeds: &SeedSet,
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
    parent_override: Option<&Entity>,
) -> Result<ExpansionResult, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    if seeds.is_empty() {
        return Err(PipelineError::EmptySeeds);
    }
    cfg.validate()?;
    let mut diagnostics = Vec::new();

    let parent = match parent_override {
        Some(p) => p.clone(),
        None => {
            let prompt = build_parent_gen_prompt(seeds)?;
            complete_with_retry(chat, &prompt, cfg, |t| parse_generated_parent(t).ok())?
                .ok_or(PipelineError::ParentGenFailed)?
        }
    };

    let mut pooled: Vec<Entity> = Vec::new();
    let mut seen: HashSet<Entity> = HashSet::new();
    let mut raw: HashSet<Entity> = HashSet::new();
    let mut issued = 0;
    let mut answered = 0;
    for (i, perm) in seed_permutations(seeds, cfg.max_shuffles, cfg.rng_seed)
        .iter()
        .enumerate()
    {
        if issued >= cfg.max_shuffles {
            break;
        }
        let mut prompt = build_set_expansion_prompt(parent.surface(), perm)?;
        prompt.meta.permutation_index = i;
        issued += 1;
        match complete_with_retry(chat, &prompt, cfg, |t| parse_expansion_response(t).ok())? {
            None => diagnostics.push(format!("permutation {i}: unparseable answer skipped")),
            Some(found) => {
                answered += 1;
                for e in found {
                    raw.insert(e.clone());
                    if !seeds.contains(&e) && seen.insert(e.clone()) {
                        pooled.push(e);
                    }
                }
            }
        }
        if pooled.len() > cfg.target_entities {
            break;
        }
    }
    if answered == 0 {
        return Err(PipelineError::NoExpansions);
    }

    let ranked = if pooled.is_empty() {
        diagnostics.push(format!(
            "no new entities beyond the seeds of {}",
            describe(&parent)
        ));
        Vec::new()
    } else {
        rank_entities(&pooled, &parent, embed)?
            .into_iter()
            .map(|(entity, score)| ScoredEntity { entity, score })
            .collect()
    };
    Ok(ExpansionResult {
        seeds: seeds.entities().to_vec(),
        parent_used: parent,
        ranked,
        permutations_used: issued,
        raw_union_size: raw.len(),
        diagnostics,
    })
}
