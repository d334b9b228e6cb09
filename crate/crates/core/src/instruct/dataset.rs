//! JSON-lines dataset files, one record per line with the keys
//! `instruction`, `input`, `output`, `task`, `meta`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InstructError, InstructionTuple, SupervisionDataset, TaskKind, TupleMeta};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    instruction: String,
    input: String,
    output: String,
    task: TaskKind,
    meta: TupleMeta,
}

fn io(e: std::io::Error) -> InstructError {
    InstructError::Io(e.to_string())
}

pub fn serialize_dataset<W: Write>(
    d: &SupervisionDataset,
    mut sink: W,
) -> Result<(), InstructError> {
    for (i, t) in d.tuples.iter().enumerate() {
        let output = t.output.clone().ok_or_else(|| InstructError::Malformed {
            line: i + 1,
            message: "training tuple without output".into(),
        })?;
        let rec = Record {
            instruction: t.instruction.clone(),
            input: t.query.clone(),
            output,
            task: t.task,
            meta: t.meta.clone(),
        };
        serde_json::to_writer(&mut sink, &rec).map_err(|e| InstructError::Io(e.to_string()))?;
        sink.write_all(b"\n").map_err(io)?;
    }
    sink.flush().map_err(io)
}

pub fn deserialize_dataset<R: BufRead>(
    source: R,
    name: &str,
) -> Result<SupervisionDataset, InstructError> {
    let mut tuples = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| InstructError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.instruction.is_empty() || rec.input.is_empty() {
            return Err(InstructError::Malformed {
                line: i + 1,
                message: "empty instruction or input".into(),
            });
        }
        tuples.push(InstructionTuple {
            instruction: rec.instruction,
            query: rec.input,
            output: Some(rec.output),
            task: rec.task,
            meta: rec.meta,
        });
    }
    Ok(SupervisionDataset {
        source_taxonomy_name: name.to_string(),
        tuples,
    })
}

pub fn write_dataset(d: &SupervisionDataset, path: impl AsRef<Path>) -> Result<(), InstructError> {
    let f = std::fs::File::create(path).map_err(io)?;
    serialize_dataset(d, std::io::BufWriter::new(f))
}

pub fn read_dataset(
    path: impl AsRef<Path>,
    name: &str,
) -> Result<SupervisionDataset, InstructError> {
    let f = std::fs::File::open(path).map_err(io)?;
    deserialize_dataset(std::io::BufReader::new(f), name)
}
