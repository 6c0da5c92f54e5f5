//! Error type for the planning, training, and CLI layer.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    /// Vocabulary manifests of loaded models and/or the dataset disagree.
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    /// A required trained model is missing from the models directory.
    #[error("missing model: {0}")]
    MissingModel(String),

    /// A per-structure-class checkpoint is missing (autoregressive models).
    #[error("missing class model for shape {0}")]
    MissingClassModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Core(#[from] structdiff_core::CoreError),

    #[error(transparent)]
    Sim(#[from] structdiff_sim::SimError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type PlannerResult<T> = Result<T, PlannerError>;

impl PlannerError {
    /// Machine-readable error record emitted on nonzero exit.
    pub fn to_json(&self) -> String {
        let kind = match self {
            PlannerError::VocabMismatch(_) => "vocab_mismatch",
            PlannerError::MissingModel(_) => "missing_model",
            PlannerError::MissingClassModel(_) => "missing_class_model",
            PlannerError::Config(_) => "config",
            PlannerError::CorruptRecord(_) => "corrupt_record",
            PlannerError::Manifest(_) => "manifest",
            PlannerError::Core(_) => "core",
            PlannerError::Sim(_) => "sim",
            PlannerError::Io(_) => "io",
            PlannerError::Toml(_) => "toml",
            PlannerError::Json(_) => "json",
        };
        serde_json::json!({ "error": kind, "message": self.to_string() }).to_string()
    }
}
