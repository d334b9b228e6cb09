use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{describe, PipelineConfig, PipelineError};
use crate::embedding::EmbeddingBackend;
use crate::instruct::build_taxo_expansion_prompt;
use crate::llm::{parse_parent_response, ChatBackend, MatchKind, ParseError};
use crate::retrieval::{candidates_from_pool, RetrievalError};
use crate::taxonomy::{Entity, Node, Taxonomy};

/// One parent prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub entity: Entity,
    pub predicted_parent: Entity,
    pub matched: MatchKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaxoExpansion {
    pub taxonomy: Taxonomy,
    pub predictions: Vec<Prediction>,
    pub diagnostics: Vec<String>,
}

/// Attach every new entity under the parent the chat backend picks from its
/// top-`k_candidates` retrieved taxonomy nodes. Predictions are made against
/// the input taxonomy; attachment follows the input order.
pub fn expand_taxonomy<C, E>(
    t: &Taxonomy,
    new_entities: &[Entity],
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
) -> Result<TaxoExpansion, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    cfg.validate()?;
    let mut seen = HashSet::new();
    for e in new_entities {
        if t.contains(e) || !seen.insert(e) {
            return Err(PipelineError::DuplicateEntity(e.surface().to_string()));
        }
    }
    if t.len() < 2 {
        return Err(RetrievalError::TaxonomyTooSmall(t.len()).into());
    }
    let mut pool = t.entities().to_vec();
    if let Some(label) = t.root_label() {
        pool.push(label.clone());
    }
    let (predictions, diagnostics) = predict_parents(new_entities, &pool, chat, embed, cfg)?;
    let taxonomy = attach_all(t, &predictions)?;
    Ok(TaxoExpansion {
        taxonomy,
        predictions,
        diagnostics,
    })
}

/// Predict a parent from `pool` for each entity, in parallel. Entities whose
/// answer stays unparseable after one retry are left out and reported.
pub(super) fn predict_parents<C, E>(
    entities: &[Entity],
    pool: &[Entity],
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
) -> Result<(Vec<Prediction>, Vec<String>), PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    let params = &cfg.decoding.taxo_expand;
    let outcomes = entities
        .par_iter()
        .map(|entity| -> Result<Option<Prediction>, PipelineError> {
            let candidates = candidates_from_pool(entity, pool, None, cfg.k_candidates, embed)?;
            let prompt = build_taxo_expansion_prompt(&candidates, None)?;
            for _ in 0..2 {
                let text = chat.complete(&prompt, params)?;
                match parse_parent_response(&text, &candidates, embed) {
                    Ok((predicted_parent, matched)) => {
                        return Ok(Some(Prediction {
                            entity: entity.clone(),
                            predicted_parent,
                            matched,
                        }))
                    }
                    Err(ParseError::ParseEmpty) => continue,
                    Err(ParseError::Embedding(e)) => return Err(RetrievalError::from(e).into()),
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut predictions = Vec::with_capacity(entities.len());
    let mut diagnostics = Vec::new();
    for (entity, outcome) in entities.iter().zip(outcomes) {
        match outcome {
            Some(p) => predictions.push(p),
            None => diagnostics.push(format!(
                "{}: unparseable parent answer skipped",
                describe(entity)
            )),
        }
    }
    Ok((predictions, diagnostics))
}

/// Add each predicted edge in order. A parent that is not a node of `t`
/// must be the root entity.
pub(super) fn attach_all(
    t: &Taxonomy,
    predictions: &[Prediction],
) -> Result<Taxonomy, PipelineError> {
    let root = t.root_entity();
    let mut out = t.clone();
    for p in predictions {
        let parent = if out.contains(&p.predicted_parent) {
            Node::Entity(p.predicted_parent.clone())
        } else if p.predicted_parent == root {
            Node::Root
        } else {
            Node::Entity(p.predicted_parent.clone())
        };
        out = out.attach(p.entity.clone(), &parent)?;
    }
    Ok(out)
}
