use std::fmt::Display;

use assaymol_core::context::ContextError;
use assaymol_core::eval::EvalError;
use assaymol_core::generation::GenerationError;
use assaymol_core::index::IndexError;
use assaymol_core::llm::LlmError;
use assaymol_core::retrieval::RetrievalError;
use assaymol_core::store::StoreError;
use assaymol_core::templates::TemplateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("missing artifact; run `{0}` first")]
    MissingArtifact(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("external tool error: {0}")]
    Tool(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(field: &str, message: impl Display) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    pub fn missing(command: &str) -> Self {
        CliError::MissingArtifact(command.to_string())
    }

    /// 1 for validation problems, 2 for provider or tool failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Provider(_) | CliError::Tool(_) => 2,
            _ => 1,
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidRequest(_) | LlmError::UnknownProvider(_) => CliError::Input(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Llm(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ContextError> for CliError {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::Llm(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Llm(e) => e.into(),
            GenerationError::Aborted { .. } => CliError::Provider(e.to_string()),
            GenerationError::Context(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ToolNotFound(_) | EvalError::ToolCrash { .. } | EvalError::UnparseableOutput { .. } => {
                CliError::Tool(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}
