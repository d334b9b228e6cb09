//! Similarity-based candidate retrieval and entity ranking.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingBackend, EmbeddingError};
use crate::taxonomy::{Entity, Taxonomy};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("nothing to rank")]
    EmptyInput,
    #[error("taxonomy has {0} node(s); retrieval needs at least 2")]
    TaxonomyTooSmall(usize),
    #[error("true parent `{0}` is not in the taxonomy")]
    UnknownParent(String),
    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Ordered candidate parents for one query entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    query: Entity,
    candidates: Vec<Entity>,
    k: usize,
}

impl CandidateSet {
    /// Checks: non-empty, no duplicates, query not a candidate, at most `k + 1`.
    pub fn new(query: Entity, candidates: Vec<Entity>, k: usize) -> Result<Self, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidCandidates(
                "k must be positive".into(),
            ));
        }
        if candidates.is_empty() {
            return Err(RetrievalError::EmptyPool);
        }
        let mut seen = HashSet::new();
        for c in &candidates {
            if c == &query {
                return Err(RetrievalError::InvalidCandidates(format!(
                    "query `{query}` listed as its own candidate"
                )));
            }
            if !seen.insert(c.norm()) {
                return Err(RetrievalError::InvalidCandidates(format!(
                    "duplicate `{c}`"
                )));
            }
        }
        if candidates.len() > k + 1 {
            return Err(RetrievalError::InvalidCandidates(format!(
                "{} candidates exceed k + 1 = {}",
                candidates.len(),
                k + 1
            )));
        }
        Ok(CandidateSet {
            query,
            candidates,
            k,
        })
    }

    pub fn query(&self) -> &Entity {
        &self.query
    }

    pub fn candidates(&self) -> &[Entity] {
        &self.candidates
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, e: &Entity) -> bool {
        self.candidates.contains(e)
    }

    /// Same set in a different order.
    pub fn reordered(&self, order: Vec<Entity>) -> Result<Self, RetrievalError> {
        let a: HashSet<&Entity> = self.candidates.iter().collect();
        let b: HashSet<&Entity> = order.iter().collect();
        if a != b || order.len() != self.candidates.len() {
            return Err(RetrievalError::InvalidCandidates(
                "reordering must be a permutation".into(),
            ));
        }
        Ok(CandidateSet {
            query: self.query.clone(),
            candidates: order,
            k: self.k,
        })
    }
}

/// Descending score, ties broken by ascending normalized text.
fn by_score_then_norm(a: &(Entity, f64), b: &(Entity, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.norm().cmp(b.0.norm()))
}

fn dedup(entities: impl IntoIterator<Item = Entity>) -> Vec<Entity> {
    let mut seen = HashSet::new();
    entities
        .into_iter()
        .filter(|e| seen.insert(e.norm().to_string()))
        .collect()
}

/// Score every entity against `anchor`, sorted best first.
pub fn score_against<B: EmbeddingBackend + ?Sized>(
    entities: Vec<Entity>,
    anchor: &Entity,
    backend: &B,
) -> Result<Vec<(Entity, f64)>, RetrievalError> {
    let anchor_vec = backend.embed(anchor.surface())?;
    let texts: Vec<&str> = entities.iter().map(Entity::surface).collect();
    let vectors = backend.embed_batch(&texts)?;
    let mut scored = entities
        .into_iter()
        .zip(vectors)
        .map(|(e, v)| Ok((e, cosine_similarity(&anchor_vec, &v)?)))
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    scored.sort_by(by_score_then_norm);
    Ok(scored)
}

/// The `k` pool entities most similar to `query`. The query itself is
/// removed from the pool; if `k` covers the pool, the whole pool comes back
/// sorted.
pub fn top_k_candidates<B: EmbeddingBackend + ?Sized>(
    query: &Entity,
    pool: &[Entity],
    k: usize,
    backend: &B,
) -> Result<Vec<Entity>, RetrievalError> {
    let pool: Vec<Entity> = dedup(pool.iter().filter(|e| *e != query).cloned());
    if pool.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let mut scored = score_against(pool, query, backend)?;
    scored.truncate(k);
    Ok(scored.into_iter().map(|(e, _)| e).collect())
}

/// Top-`k` candidates drawn from `pool`, with `true_parent` appended when it
/// did not make the cut (training mode).
pub fn candidates_from_pool<B: EmbeddingBackend + ?Sized>(
    query: &Entity,
    pool: &[Entity],
    true_parent: Option<&Entity>,
    k: usize,
    backend: &B,
) -> Result<CandidateSet, RetrievalError> {
    let mut top = top_k_candidates(query, pool, k, backend)?;
    if let Some(p) = true_parent {
        if p == query {
            return Err(RetrievalError::InvalidCandidates(format!(
                "`{query}` cannot be its own parent"
            )));
        }
        if !top.contains(p) {
            top.push(p.clone());
        }
    }
    CandidateSet::new(query.clone(), top, k)
}

/// Candidate parents for `query` from every node of `taxonomy`.
///
/// `true_parent` may be a taxonomy node or the taxonomy's root entity (for
/// children of ROOT).
pub fn build_candidate_parents<B: EmbeddingBackend + ?Sized>(
    query: &Entity,
    taxonomy: &Taxonomy,
    true_parent: Option<&Entity>,
    k: usize,
    backend: &B,
) -> Result<CandidateSet, RetrievalError> {
    if taxonomy.len() < 2 {
        return Err(RetrievalError::TaxonomyTooSmall(taxonomy.len()));
    }
    if let Some(p) = true_parent {
        if !taxonomy.contains(p) && p != &taxonomy.root_entity() {
            return Err(RetrievalError::UnknownParent(p.surface().to_string()));
        }
    }
    candidates_from_pool(query, taxonomy.entities(), true_parent, k, backend)
}

/// Rank `entities` by cosine similarity to `anchor`, best first.
pub fn rank_entities<B: EmbeddingBackend + ?Sized>(
    entities: &[Entity],
    anchor: &Entity,
    backend: &B,
) -> Result<Vec<(Entity, f64)>, RetrievalError> {
    if entities.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    score_against(dedup(entities.iter().cloned()), anchor, backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;

    fn e(s: &str) -> Entity {
        Entity::new(s).unwrap()
    }

    #[test]
    fn k_covers_pool() {
        let h = HashEmbedder::default();
        let pool = vec![e("apple pie"), e("apple"), e("car")];
        let out = top_k_candidates(&e("apple tart"), &pool, 10, &h).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn query_is_excluded() {
        let h = HashEmbedder::default();
        let pool = vec![e("heart disease"), e("heart diseases"), e("car")];
        let out = top_k_candidates(&e("Heart Disease"), &pool, 1, &h).unwrap();
        assert_eq!(out, vec![e("heart diseases")]);
        assert_eq!(
            top_k_candidates(&e("x"), &[e("X")], 3, &h),
            Err(RetrievalError::EmptyPool)
        );
    }

    #[test]
    fn true_parent_union() {
        let h = HashEmbedder::default();
        let t = Taxonomy::parse(
            "ROOT\tdisease\ndisease\theart disease\ndisease\tlung disease\nROOT\tzebra\n",
        )
        .unwrap();
        let q = e("heart failure");
        let inside = build_candidate_parents(&q, &t, Some(&e("heart disease")), 2, &h).unwrap();
        assert_eq!(inside.len(), 2);
        let outside = build_candidate_parents(&q, &t, Some(&e("zebra")), 1, &h).unwrap();
        assert_eq!(outside.len(), 2);
        assert!(outside.contains(&e("zebra")));
        // ROOT stands in as an explicit parent for top-level nodes
        let root = build_candidate_parents(&e("disease"), &t, Some(&t.root_entity()), 1, &h);
        assert!(root.unwrap().contains(&e("ROOT")));
        assert!(matches!(
            build_candidate_parents(&q, &t, Some(&e("nope")), 2, &h),
            Err(RetrievalError::UnknownParent(_))
        ));
        let tiny = Taxonomy::parse("ROOT\ta\n").unwrap();
        assert_eq!(
            build_candidate_parents(&q, &tiny, None, 2, &h),
            Err(RetrievalError::TaxonomyTooSmall(1))
        );
    }

    #[test]
    fn ranking_puts_anchor_first() {
        let h = HashEmbedder::default();
        let ranked =
            rank_entities(&[e("stroke"), e("diseases"), e("car")], &e("Diseases"), &h).unwrap();
        assert_eq!(ranked[0].0, e("diseases"));
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        let single = rank_entities(&[e("x")], &e("y"), &h).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].1.is_finite());
        assert_eq!(
            rank_entities(&[], &e("y"), &h),
            Err(RetrievalError::EmptyInput)
        );
    }

    #[test]
    fn candidate_set_checks() {
        assert!(CandidateSet::new(e("q"), vec![e("q")], 2).is_err());
        assert!(CandidateSet::new(e("q"), vec![e("a"), e("A")], 2).is_err());
        assert!(CandidateSet::new(e("q"), vec![e("a"), e("b"), e("c")], 1).is_err());
        let c = CandidateSet::new(e("q"), vec![e("a"), e("b")], 2).unwrap();
        assert!(c.reordered(vec![e("b"), e("a")]).is_ok());
        assert!(c.reordered(vec![e("b"), e("c")]).is_err());
    }
}
