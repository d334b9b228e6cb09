use serde::{Deserialize, Serialize};

use super::set_expansion::expand_entity_set;
use super::taxo_expansion::{attach_all, predict_parents};
use super::{
    complete_with_retry, CandidatePool, ExpansionResult, PipelineConfig, PipelineError, Prediction,
};
use crate::embedding::EmbeddingBackend;
use crate::eval::{
    gold_parent_map, parent_precision_at_k, sibling_precision_at_k, EvalError, GoldSet,
};
use crate::instruct::build_parent_gen_prompt;
use crate::llm::{parse_generated_parent, ChatBackend, MatchKind};
use crate::taxonomy::{Entity, SeedSet, Taxonomy};

/// Outcome of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    /// 1 for the children of ROOT.
    pub layer: usize,
    pub seeds: Vec<Entity>,
    pub anchor: Entity,
    /// `None` when no answer named anything new for this layer.
    pub expansion: Option<ExpansionResult>,
    pub predictions: Vec<Prediction>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub taxonomy: Taxonomy,
    pub layers: Vec<LayerResult>,
}

impl Construction {
    /// Every prediction across layers, top layer first.
    pub fn predictions(&self) -> Vec<Prediction> {
        self.layers
            .iter()
            .flat_map(|l| l.predictions.clone())
            .collect()
    }
}

/// Grow a seed taxonomy one layer at a time, top-down: expand each layer's
/// node set, then attach the new entities of layer 1 to ROOT and those of
/// deeper layers to a parent chosen from the layer above.
pub fn construct_taxonomy<C, E>(
    seed_taxo: &Taxonomy,
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
) -> Result<Construction, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    cfg.validate()?;
    let depth = seed_taxo.num_layers();
    if depth < 2 {
        return Err(PipelineError::TooFewLayers(depth));
    }
    let mut t = seed_taxo.clone();
    let mut layers = Vec::with_capacity(depth);
    for l in 1..=depth {
        let seeds = SeedSet::new(seed_taxo.layer(l))?;
        let anchor = match (l, seed_taxo.root_label()) {
            (1, Some(label)) => label.clone(),
            _ => {
                let prompt = build_parent_gen_prompt(&seeds)?;
                complete_with_retry(chat, &prompt, cfg, |t| parse_generated_parent(t).ok())?
                    .ok_or(PipelineError::ParentGenFailed)?
            }
        };
        let mut diagnostics = Vec::new();
        let expansion = match expand_entity_set(&seeds, chat, embed, cfg, Some(&anchor)) {
            Ok(r) => Some(r),
            Err(PipelineError::NoExpansions) => {
                diagnostics.push(format!("layer {l}: nothing new found"));
                None
            }
            Err(e) => return Err(e),
        };
        let fresh: Vec<Entity> = expansion
            .iter()
            .flat_map(|r| r.entities())
            .filter(|e| {
                let known = t.contains(e);
                if known {
                    diagnostics.push(format!(
                        "layer {l}: `{}` already placed, skipped",
                        e.surface()
                    ));
                }
                !known
            })
            .collect();
        let predictions = if fresh.is_empty() {
            Vec::new()
        } else if l == 1 {
            let root = t.root_entity();
            fresh
                .into_iter()
                .map(|entity| Prediction {
                    entity,
                    predicted_parent: root.clone(),
                    matched: MatchKind::Exact,
                })
                .collect()
        } else {
            let pool = match cfg.construction_pool {
                CandidatePool::LayerAbove => t.layer(l - 1),
                CandidatePool::Whole => t.entities().to_vec(),
            };
            let (p, d) = predict_parents(&fresh, &pool, chat, embed, cfg)?;
            diagnostics.extend(d);
            p
        };
        t = attach_all(&t, &predictions)?;
        layers.push(LayerResult {
            layer: l,
            seeds: seeds.entities().to_vec(),
            anchor,
            expansion,
            predictions,
            diagnostics,
        });
    }
    debug_assert!(seed_taxo
        .edges()
        .all(|(c, p)| t.parent(c).ok() == Some(p.clone())));
    Ok(Construction {
        taxonomy: t,
        layers,
    })
}

/// Construction quality against a gold taxonomy at cutoff `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionScores {
    /// Sibling P@k, averaged over scored layers.
    pub sibling_precision: f64,
    /// Parent P@k over each layer's attachments, averaged over scored layers.
    pub parent_precision: f64,
    /// Layers whose gold layer holds nodes beyond the seeds.
    pub layers_scored: usize,
}

/// Score each layer that had something to find: Sibling P@k of its ranked
/// expansion against the gold layer minus seeds, and Parent P@k of its
/// attachments (in ranked order) against gold parents.
pub fn evaluate_construction(
    layers: &[LayerResult],
    gold: &Taxonomy,
    k: usize,
) -> Result<ConstructionScores, EvalError> {
    let parents = gold_parent_map(gold);
    let (mut sib, mut par, mut n) = (0.0, 0.0, 0);
    for layer in layers {
        let missing = GoldSet::new(
            gold.layer(layer.layer)
                .into_iter()
                .filter(|e| !layer.seeds.contains(e)),
        );
        if missing.is_empty() {
            continue;
        }
        let found = layer
            .expansion
            .as_ref()
            .map(|r| r.entities())
            .unwrap_or_default();
        let pairs: Vec<(Entity, Entity)> = layer
            .predictions
            .iter()
            .map(|p| (p.entity.clone(), p.predicted_parent.clone()))
            .collect();
        sib += sibling_precision_at_k(&found, &missing, k)?;
        par += parent_precision_at_k(&pairs, &parents, k)?;
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(ConstructionScores {
        sibling_precision: sib / n as f64,
        parent_precision: par / n as f64,
        layers_scored: n,
    })
}
