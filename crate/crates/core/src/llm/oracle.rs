use std::collections::HashSet;

use rand::Rng;

use super::{prompt_hash, BackendError, ChatBackend, DecodingParams};
use crate::instruct::{expansion_output, parent_output, template, InstructionTuple, TaskKind};
use crate::rng::{derive_seed, seeded};
use crate::taxonomy::{Entity, Node, SeedClass, Taxonomy, TaxonomyError};

/// Answers prompts from a gold taxonomy.
///
/// * ParentGen: the lowest common ancestor of the seeds' parents.
/// * SetExpand: every gold node at the seeds' depth under that ancestor,
///   minus the seeds (for sibling seeds: the remaining siblings). Each
///   answer is swapped for a random node outside the class with probability
///   `sibling_noise_rate`.
/// * TaxoExpand: the gold parent, swapped for a uniformly random other
///   candidate with probability `parent_error_rate`.
///
/// Randomness is derived from `(rng_seed, prompt hash)`, so answers do not
/// depend on call order.
#[derive(Clone, Debug)]
pub struct OracleBackend {
    gold: Taxonomy,
    parent_error_rate: f64,
    sibling_noise_rate: f64,
    rng_seed: u64,
    response_limit: Option<usize>,
}

impl OracleBackend {
    /// Noise-free oracle.
    pub fn new(gold: Taxonomy) -> Self {
        OracleBackend {
            gold,
            parent_error_rate: 0.0,
            sibling_noise_rate: 0.0,
            rng_seed: 0,
            response_limit: None,
        }
    }

    pub fn with_noise(
        mut self,
        parent_error_rate: f64,
        sibling_noise_rate: f64,
    ) -> Result<Self, BackendError> {
        for (name, r) in [
            ("parent_error_rate", parent_error_rate),
            ("sibling_noise_rate", sibling_noise_rate),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(BackendError::Config(format!(
                    "{name} must be in [0, 1), got {r}"
                )));
            }
        }
        self.parent_error_rate = parent_error_rate;
        self.sibling_noise_rate = sibling_noise_rate;
        Ok(self)
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    /// Cap the entities per set-expansion answer. Successive permutation
    /// indices get successive, wrapping windows of the class.
    pub fn with_response_limit(mut self, limit: Option<usize>) -> Self {
        self.response_limit = limit.filter(|&l| l > 0);
        self
    }

    pub fn gold(&self) -> &Taxonomy {
        &self.gold
    }

    fn lookup(&self, text: &str) -> Result<Entity, BackendError> {
        let e = Entity::new(text).map_err(|_| BackendError::UnknownEntity(text.to_string()))?;
        self.gold
            .get(e.norm())
            .cloned()
            .ok_or_else(|| BackendError::UnknownEntity(text.to_string()))
    }

    fn node_entity(&self, n: Node) -> Entity {
        match n {
            Node::Root => self.gold.root_entity(),
            Node::Entity(e) => e,
        }
    }

    fn seed_class(&self, seeds: &[Entity]) -> Result<SeedClass, BackendError> {
        self.gold.class_of(seeds).map_err(|e| match e {
            TaxonomyError::UnknownNode(n) => BackendError::UnknownEntity(n),
            TaxonomyError::MixedDepth(names) => BackendError::NoCommonParent(names),
            other => BackendError::UnsupportedPrompt(other.to_string()),
        })
    }

    fn parse_list(&self, items: Vec<&str>) -> Result<Vec<Entity>, BackendError> {
        items.into_iter().map(|s| self.lookup(s)).collect()
    }

    fn answer_parent_gen(&self, prompt: &InstructionTuple) -> Result<String, BackendError> {
        let seeds = template::parent_gen_seeds(&prompt.query)
            .ok_or_else(|| BackendError::UnsupportedPrompt(prompt.query.clone()))?;
        let seeds = self.parse_list(seeds)?;
        let class = self.seed_class(&seeds)?;
        Ok(parent_output(&self.node_entity(class.anchor)))
    }

    fn answer_set_expand(
        &self,
        prompt: &InstructionTuple,
        rng: &mut impl Rng,
    ) -> Result<String, BackendError> {
        let (_, seeds) = template::set_expansion_parts(&prompt.query)
            .ok_or_else(|| BackendError::UnsupportedPrompt(prompt.query.clone()))?;
        let seeds = self.parse_list(seeds)?;
        let class = self.seed_class(&seeds)?.members;
        let class: Vec<&Entity> = class.iter().collect();
        let seed_set: HashSet<&Entity> = seeds.iter().collect();
        let mut answer: Vec<&Entity> = class
            .iter()
            .copied()
            .filter(|e| !seed_set.contains(e))
            .collect();
        if let Some(limit) = self.response_limit {
            if limit < answer.len() {
                let start = prompt.meta.permutation_index * limit % answer.len();
                answer = answer
                    .iter()
                    .cycle()
                    .skip(start)
                    .take(limit)
                    .copied()
                    .collect();
            }
        }
        if self.sibling_noise_rate > 0.0 {
            let class_set: HashSet<&Entity> = class.iter().copied().collect();
            let outsiders: Vec<&Entity> = self
                .gold
                .entities()
                .iter()
                .filter(|e| !class_set.contains(e) && !seed_set.contains(e))
                .collect();
            for slot in answer.iter_mut() {
                if rng.gen_bool(self.sibling_noise_rate) && !outsiders.is_empty() {
                    *slot = outsiders[rng.gen_range(0..outsiders.len())];
                }
            }
        }
        Ok(expansion_output(answer)
            .trim_end_matches([' ', '.'])
            .to_string())
    }

    fn answer_taxo_expand(
        &self,
        prompt: &InstructionTuple,
        rng: &mut impl Rng,
    ) -> Result<String, BackendError> {
        let query = template::taxo_query_entity(&prompt.query)
            .ok_or_else(|| BackendError::UnsupportedPrompt(prompt.query.clone()))?;
        let candidates = template::taxo_candidates(&prompt.instruction)
            .ok_or_else(|| BackendError::UnsupportedPrompt(prompt.instruction.clone()))?;
        let entity = self.lookup(query)?;
        let gold = self.node_entity(self.gold.parent(&entity).expect("gold node"));
        if self.parent_error_rate > 0.0 && rng.gen_bool(self.parent_error_rate) {
            let others: Vec<&str> = candidates
                .iter()
                .copied()
                .filter(|c| Entity::new(*c).map_or(true, |c| c != gold))
                .collect();
            if !others.is_empty() {
                let pick = others[rng.gen_range(0..others.len())];
                return Ok(format!("The parent class is {pick}."));
            }
        }
        Ok(parent_output(&gold))
    }
}

impl ChatBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn complete(
        &self,
        prompt: &InstructionTuple,
        _params: &DecodingParams,
    ) -> Result<String, BackendError> {
        let mut rng = seeded(derive_seed(self.rng_seed, &prompt_hash(prompt)));
        match prompt.task {
            TaskKind::ParentGen => self.answer_parent_gen(prompt),
            TaskKind::SetExpand => self.answer_set_expand(prompt, &mut rng),
            TaskKind::TaxoExpand => self.answer_taxo_expand(prompt, &mut rng),
        }
    }
}
