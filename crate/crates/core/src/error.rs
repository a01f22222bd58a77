use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid parameter `{key}`: {message}")]
    InvalidParameter { key: String, message: String },

    #[error("pitch angle {theta} rad is at the Euler-angle singularity")]
    Singularity { theta: f64 },

    #[error("bound {index} is inconsistent: lower {lower} > upper {upper}")]
    InfeasibleBounds { index: usize, lower: f64, upper: f64 },

    #[error("unknown configuration key `{key}`{}", suggestion_suffix(.suggestions))]
    UnknownKey {
        key: String,
        suggestions: Vec<String>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn suggestion_suffix(suggestions: &[String]) -> String {
    if suggestions.is_empty() {
        String::new()
    } else {
        format!("; did you mean one of: {}", suggestions.join(", "))
    }
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            message: message.into(),
        }
    }
}
