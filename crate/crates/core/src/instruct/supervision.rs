use std::collections::HashSet;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{
    build_set_expansion_prompt, build_taxo_expansion_prompt, expansion_output, shuffle_candidates,
    InstructError, InstructionTuple, TupleMeta,
};
use crate::embedding::EmbeddingBackend;
use crate::retrieval::build_candidate_parents;
use crate::rng::{derive_seed, seeded};
use crate::taxonomy::{Entity, Node, SeedSet, Taxonomy};

/// Training tuples derived from one taxonomy. Every tuple carries an output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupervisionDataset {
    pub source_taxonomy_name: String,
    pub tuples: Vec<InstructionTuple>,
}

impl SupervisionDataset {
    pub fn new(name: impl Into<String>) -> Self {
        SupervisionDataset {
            source_taxonomy_name: name.into(),
            tuples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Parent-finding records: for every non-root node, its top-`k` similar
/// nodes plus its true parent, shuffled `r` times, one record per shuffle.
/// Children of ROOT use [`Taxonomy::root_entity`] as their gold parent.
pub fn gen_parent_finding_supervision<B: EmbeddingBackend + ?Sized>(
    t: &Taxonomy,
    name: &str,
    k: usize,
    r: usize,
    backend: &B,
    rng_seed: u64,
) -> Result<SupervisionDataset, InstructError> {
    if t.len() < 2 {
        return Err(InstructError::TaxonomyTooSmall(t.len()));
    }
    if k == 0 {
        return Err(InstructError::NonPositive("k"));
    }
    if r == 0 {
        return Err(InstructError::NonPositive("r"));
    }
    let per_node: Vec<Vec<InstructionTuple>> = t
        .entities()
        .par_iter()
        .map(|node| {
            let gold = match t.parent(node).expect("node of t") {
                Node::Root => t.root_entity(),
                Node::Entity(p) => p,
            };
            let cands = build_candidate_parents(node, t, Some(&gold), k, backend)?;
            let seed = derive_seed(rng_seed, node.norm());
            shuffle_candidates(&cands, r, seed)
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let mut tuple = build_taxo_expansion_prompt(c, Some(&gold))?;
                    tuple.meta.shuffle_index = j;
                    Ok(tuple)
                })
                .collect()
        })
        .collect::<Result<_, InstructError>>()?;
    Ok(SupervisionDataset {
        source_taxonomy_name: name.to_string(),
        tuples: per_node.into_iter().flatten().collect(),
    })
}

fn binomial_within(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Sibling-recovery records: for every parent with more than `subset_size`
/// children, up to `max_subsets_per_parent` distinct child subsets become
/// set-expansion queries whose output lists the held-out siblings in
/// taxonomy order. ROOT takes part only when it carries a label.
pub fn gen_sibling_recovery_supervision(
    t: &Taxonomy,
    name: &str,
    subset_size: usize,
    max_subsets_per_parent: usize,
    rng_seed: u64,
) -> Result<SupervisionDataset, InstructError> {
    if subset_size == 0 {
        return Err(InstructError::NonPositive("subset size"));
    }
    let mut tuples = Vec::new();
    for parent in t.parents() {
        let parent_entity = match &parent {
            Node::Root => match t.root_label() {
                Some(l) => l.clone(),
                None => continue,
            },
            Node::Entity(p) => p.clone(),
        };
        let kids = t.children(&parent).expect("parent of t");
        let n = kids.len();
        if n <= subset_size {
            continue;
        }
        let subsets = match binomial_within(n, subset_size, max_subsets_per_parent) {
            Some(_) => combinations(n, subset_size),
            None => {
                let mut rng = seeded(derive_seed(rng_seed, parent_entity.norm()));
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                while out.len() < max_subsets_per_parent {
                    let mut s = sample(&mut rng, n, subset_size).into_vec();
                    s.sort_unstable();
                    if seen.insert(s.clone()) {
                        out.push(s);
                    }
                }
                out
            }
        };
        for (i, subset) in subsets.iter().enumerate() {
            let chosen: HashSet<usize> = subset.iter().copied().collect();
            let seeds: Vec<Entity> = subset.iter().map(|&c| kids[c].clone()).collect();
            let rest: Vec<&Entity> = (0..n)
                .filter(|c| !chosen.contains(c))
                .map(|c| &kids[c])
                .collect();
            let seeds = SeedSet::new(seeds).expect("distinct children");
            let mut tuple = build_set_expansion_prompt(parent_entity.surface(), &seeds)?;
            tuple.output = Some(expansion_output(rest));
            tuple.meta = TupleMeta {
                source_node: Some(parent_entity.clone()),
                permutation_index: i,
                shuffle_index: 0,
            };
            tuples.push(tuple);
        }
    }
    Ok(SupervisionDataset {
        source_taxonomy_name: name.to_string(),
        tuples,
    })
}
