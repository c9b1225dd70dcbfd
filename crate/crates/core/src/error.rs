use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid motif word {0:?}: only A, C, G, T allowed")]
    InvalidWord(String),

    #[error("word length must be at least 1, got {0}")]
    InvalidWordLength(i64),

    #[error("cannot parse element {input:?} at byte {offset}: {reason}")]
    ElementSyntax {
        input: String,
        offset: usize,
        reason: String,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("sample {0:?} has zero variance and cannot be standardized")]
    ConstantSample(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("component {index} has zero weight and cannot be used as a basis vector")]
    NullComponent { index: usize },

    #[error("covariate is degenerate (norm {norm:.3e} at or below {threshold:.3e})")]
    DegenerateCovariate { norm: f64, threshold: f64 },

    #[error("feature column is constant; correlation undefined")]
    ConstantFeature,

    #[error("invalid tau {tau} for G = {genes}: need 0 < tau < G")]
    DegenerateTau { tau: usize, genes: usize },

    #[error("element {0} has no instance with a complete flanking window")]
    NoFlankInstances(String),

    #[error("background frequency of base {0} is zero but the base is observed")]
    ZeroBackground(char),

    #[error("lattice enumeration exceeds budget ({work} > {budget})")]
    LatticeBudget { work: u128, budget: u128 },

    #[error("rank-sum test needs two non-empty groups (carriers {carriers}, others {others})")]
    EmptyGroup { carriers: usize, others: usize },

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True when the failure is attributable to user input rather than a defect.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::InvalidWord(_)
            | Error::InvalidWordLength(_)
            | Error::ElementSyntax { .. }
            | Error::Parse { .. }
            | Error::ConstantSample(_)
            | Error::Input(_)
            | Error::NullComponent { .. }
            | Error::MissingArtifact(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => true,
            _ => false,
        }
    }
}
