use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, prompt_hash_parts, BackendError, ChatBackend, DecodingParams};
use crate::instruct::InstructionTuple;

/// One recorded exchange. Keys match the dataset format so a record can be
/// written straight from a prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRecord {
    pub instruction: String,
    pub input: String,
    pub response: String,
}

/// Canned responses keyed by prompt hash. Unknown prompts are errors, so a
/// replayed run can never fall through to a live model.
#[derive(Clone, Debug, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &InstructionTuple, response: impl Into<String>) {
        self.responses.insert(prompt_hash(prompt), response.into());
    }

    pub fn with(mut self, prompt: &InstructionTuple, response: impl Into<String>) -> Self {
        self.insert(prompt, response);
        self
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Read JSON lines of [`ReplayRecord`].
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, BackendError> {
        let mut responses = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| BackendError::Config(format!("replay line {}: {e}", i + 1)))?;
            responses.insert(
                prompt_hash_parts(&rec.instruction, &rec.input),
                rec.response,
            );
        }
        Ok(ReplayBackend { responses })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

impl ChatBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(
        &self,
        prompt: &InstructionTuple,
        _: &DecodingParams,
    ) -> Result<String, BackendError> {
        let h = prompt_hash(prompt);
        self.responses
            .get(&h)
            .cloned()
            .ok_or(BackendError::UnknownPrompt(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::{build_parent_gen_prompt, TaskKind};
    use crate::taxonomy::{Entity, SeedSet};

    fn prompt(x: &str) -> InstructionTuple {
        build_parent_gen_prompt(&SeedSet::new(vec![Entity::new(x).unwrap()]).unwrap()).unwrap()
    }

    #[test]
    fn known_and_unknown_prompts() {
        let r = ReplayBackend::new().with(&prompt("a"), "The parent class is b.");
        let d = DecodingParams::for_task(TaskKind::ParentGen);
        assert_eq!(
            r.complete(&prompt("a"), &d).unwrap(),
            "The parent class is b."
        );
        assert!(matches!(
            r.complete(&prompt("z"), &d),
            Err(BackendError::UnknownPrompt(_))
        ));
    }

    #[test]
    fn loads_json_lines() {
        let p = prompt("a");
        let rec = ReplayRecord {
            instruction: p.instruction.clone(),
            input: p.query.clone(),
            response: "ok".into(),
        };
        let text = format!("{}\n\n", serde_json::to_string(&rec).unwrap());
        let r = ReplayBackend::from_reader(text.as_bytes()).unwrap();
        let d = DecodingParams::for_task(TaskKind::ParentGen);
        assert_eq!(r.complete(&p, &d).unwrap(), "ok");
        assert!(ReplayBackend::from_reader("{\"instruction\":1}".as_bytes()).is_err());
    }
}
