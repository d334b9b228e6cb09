//! Evaluation metrics and report assembly.
//!
//! Ranked lists shorter than `k` count the missing positions as irrelevant
//! (or incorrect), and an expanded entity with no gold parent is never a
//! correct parent prediction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{Entity, Node, Taxonomy, TaxonomyError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Gold-class membership test.
pub trait MembershipOracle {
    fn is_relevant(&self, e: &Entity) -> bool;
}

impl<F: Fn(&Entity) -> bool> MembershipOracle for F {
    fn is_relevant(&self, e: &Entity) -> bool {
        self(e)
    }
}

/// Explicit gold set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSet(HashSet<Entity>);

impl GoldSet {
    pub fn new(members: impl IntoIterator<Item = Entity>) -> Self {
        GoldSet(members.into_iter().collect())
    }

    /// The gold class of `seeds` in `t`, seeds excluded.
    pub fn class_of(t: &Taxonomy, seeds: &[Entity]) -> Result<Self, EvalError> {
        let class = t.class_of(seeds)?;
        Ok(GoldSet(
            class
                .members
                .into_iter()
                .filter(|m| !seeds.contains(m))
                .collect(),
        ))
    }

    /// Layer `l` of `t`.
    pub fn layer(t: &Taxonomy, l: usize) -> Self {
        GoldSet(t.layer(l).into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl MembershipOracle for GoldSet {
    fn is_relevant(&self, e: &Entity) -> bool {
        self.0.contains(e)
    }
}

fn check_k(k: usize) -> Result<(), EvalError> {
    if k == 0 {
        Err(EvalError::ZeroK)
    } else {
        Ok(())
    }
}

/// `(1/k) * sum over relevant positions u <= k of precision@u`.
pub fn average_precision_at_k<O: MembershipOracle + ?Sized>(
    ranked: &[Entity],
    oracle: &O,
    k: usize,
) -> Result<f64, EvalError> {
    check_k(k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (u, e) in ranked.iter().take(k).enumerate() {
        if oracle.is_relevant(e) {
            hits += 1;
            sum += hits as f64 / (u + 1) as f64;
        }
    }
    Ok(sum / k as f64)
}

/// Mean AP@k over queries.
pub fn map_at_k<O: MembershipOracle>(
    results: &[(Vec<Entity>, O)],
    k: usize,
) -> Result<f64, EvalError> {
    check_k(k)?;
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (ranked, oracle) in results {
        total += average_precision_at_k(ranked, oracle, k)?;
    }
    Ok(total / results.len() as f64)
}

/// Exact-match rate of `(predicted, gold)` pairs.
pub fn accuracy(predictions: &[(Entity, Entity)]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions.iter().filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// `2 * depth(lca) / (depth(predicted) + depth(gold))`.
pub fn wu_palmer(t: &Taxonomy, predicted: &Node, gold: &Node) -> Result<f64, EvalError> {
    let lca = t.lowest_common_ancestor(predicted, gold)?;
    let num = 2 * t.depth(&lca)?;
    let den = t.depth(predicted)? + t.depth(gold)?;
    Ok(num as f64 / den as f64)
}

pub fn mean_wu_palmer(t: &Taxonomy, pairs: &[(Node, Node)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (p, g) in pairs {
        total += wu_palmer(t, p, g)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Resolve an entity to a node of `t`; the root entity maps to ROOT.
pub fn node_in(t: &Taxonomy, e: &Entity) -> Result<Node, EvalError> {
    if t.contains(e) {
        Ok(Node::Entity(e.clone()))
    } else if *e == t.root_entity() {
        Ok(Node::Root)
    } else {
        Err(TaxonomyError::UnknownNode(e.surface().to_string()).into())
    }
}

/// Fraction of the top `k` entities that are gold members.
pub fn sibling_precision_at_k<O: MembershipOracle + ?Sized>(
    expanded: &[Entity],
    oracle: &O,
    k: usize,
) -> Result<f64, EvalError> {
    check_k(k)?;
    let hits = expanded
        .iter()
        .take(k)
        .filter(|e| oracle.is_relevant(e))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Fraction of the top `k` `(entity, predicted parent)` pairs whose parent
/// matches `gold_parents`.
pub fn parent_precision_at_k(
    expanded: &[(Entity, Entity)],
    gold_parents: &HashMap<Entity, Entity>,
    k: usize,
) -> Result<f64, EvalError> {
    check_k(k)?;
    let hits = expanded
        .iter()
        .take(k)
        .filter(|(e, p)| gold_parents.get(e) == Some(p))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Child to parent map of `t`, with the root entity standing for ROOT.
pub fn gold_parent_map(t: &Taxonomy) -> HashMap<Entity, Entity> {
    let root = t.root_entity();
    t.edges()
        .map(|(c, p)| {
            let p = match p {
                Node::Root => root.clone(),
                Node::Entity(e) => e,
            };
            (c.clone(), p)
        })
        .collect()
}

/// Metric values keyed by name (e.g. `MAP@10`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub queries: usize,
    pub fixtures: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>, queries: usize, fixtures: Vec<String>) -> Self {
        EvalReport {
            task: task.into(),
            queries,
            fixtures,
            metrics: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two aligned columns, metric and value.
    pub fn to_table(&self) -> String {
        let width = self
            .metrics
            .keys()
            .map(String::len)
            .chain(["metric".len()])
            .max()
            .unwrap_or(0);
        let mut out = format!("task: {}  queries: {}\n", self.task, self.queries);
        let _ = writeln!(out, "{:<width$}  value", "metric");
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "{k:<width$}  {v:.4}");
        }
        out
    }
}

/// One row of a shuffle sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub shuffles: usize,
    pub metric: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("shuffles,metric\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.shuffles, r.metric);
    }
    out
}
