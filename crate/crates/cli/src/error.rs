use taxo_core::embedding::EmbeddingError;
use taxo_core::retrieval::RetrievalError;
use taxo_core::{BackendError, PipelineError};

/// A failure with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn backend(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) => CliError::Input(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(b) => CliError::backend(b),
            PipelineError::ParentGenFailed | PipelineError::NoExpansions => {
                CliError::Backend(e.to_string())
            }
            PipelineError::Retrieval(RetrievalError::Embedding(EmbeddingError::Backend {
                ..
            })) => CliError::Backend(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("`{}`: {e}", path.display()))
}
