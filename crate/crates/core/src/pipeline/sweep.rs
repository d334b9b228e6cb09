use super::construction::{construct_taxonomy, evaluate_construction};
use super::set_expansion::expand_entity_set;
use super::{PipelineConfig, PipelineError};
use crate::embedding::EmbeddingBackend;
use crate::eval::{map_at_k, GoldSet, SweepRow};
use crate::llm::ChatBackend;
use crate::taxonomy::{Entity, SeedSet, Taxonomy};

/// One set-expansion query with its gold answers.
#[derive(Clone, Debug)]
pub struct SetQuery {
    pub seeds: SeedSet,
    pub parent: Option<Entity>,
    pub gold: GoldSet,
}

/// What a sweep reruns at each budget.
#[derive(Clone, Copy, Debug)]
pub enum SweepTask<'a> {
    /// MAP@k over the queries.
    Set { queries: &'a [SetQuery], k: usize },
    /// Sibling P@k against the gold layers, averaged over layers that have
    /// anything left to find.
    Construct {
        seed: &'a Taxonomy,
        gold: &'a Taxonomy,
        k: usize,
    },
}

/// Rerun `task` with `max_shuffles` set to each budget in turn; everything
/// else, including `rng_seed`, stays fixed.
pub fn shuffle_sweep<C, E>(
    task: SweepTask<'_>,
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
    shuffle_counts: &[usize],
) -> Result<Vec<SweepRow>, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    if shuffle_counts.is_empty() || shuffle_counts.contains(&0) {
        return Err(PipelineError::Config(
            "shuffle counts must be a non-empty list of positive integers".into(),
        ));
    }
    shuffle_counts
        .iter()
        .map(|&shuffles| {
            let run = PipelineConfig {
                max_shuffles: shuffles,
                ..cfg.clone()
            };
            let metric = match task {
                SweepTask::Set { queries, k } => set_metric(queries, k, chat, embed, &run)?,
                SweepTask::Construct { seed, gold, k } => {
                    construct_metric(seed, gold, k, chat, embed, &run)?
                }
            };
            Ok(SweepRow { shuffles, metric })
        })
        .collect()
}

fn set_metric<C, E>(
    queries: &[SetQuery],
    k: usize,
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
) -> Result<f64, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    let mut results = Vec::with_capacity(queries.len());
    for q in queries {
        let r = expand_entity_set(&q.seeds, chat, embed, cfg, q.parent.as_ref())?;
        results.push((r.entities(), q.gold.clone()));
    }
    Ok(map_at_k(&results, k)?)
}

fn construct_metric<C, E>(
    seed: &Taxonomy,
    gold: &Taxonomy,
    k: usize,
    chat: &C,
    embed: &E,
    cfg: &PipelineConfig,
) -> Result<f64, PipelineError>
where
    C: ChatBackend + ?Sized,
    E: EmbeddingBackend + ?Sized,
{
    let built = construct_taxonomy(seed, chat, embed, cfg)?;
    Ok(evaluate_construction(&built.layers, gold, k)?.sibling_precision)
}
