//! Taxonomy-aware instruction generation, LLM-driven set expansion,
//! taxonomy expansion and seed-guided taxonomy construction.
//!
//! The main entry points are [`expand_entity_set`], [`expand_taxonomy`] and
//! [`construct_taxonomy`]. Chat models plug in through [`ChatBackend`] and
//! embedding models through [`EmbeddingBackend`].

pub mod embedding;
pub mod eval;
pub mod instruct;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod taxonomy;

pub use embedding::{CachedEmbedder, Embedding, EmbeddingBackend, EmbeddingError, HashEmbedder};
pub use eval::{EvalError, EvalReport, GoldSet, MembershipOracle, SweepRow};
pub use instruct::{InstructError, InstructionTuple, SupervisionDataset, TaskKind};
pub use llm::{
    BackendError, ChatBackend, DecodingParams, OracleBackend, RemoteChat, ReplayBackend,
};
pub use pipeline::{
    construct_taxonomy, expand_entity_set, expand_taxonomy, shuffle_sweep, PipelineConfig,
    PipelineError,
};
pub use retrieval::{CandidateSet, RetrievalError};
pub use taxonomy::{Entity, Node, SeedSet, Taxonomy, TaxonomyError};
