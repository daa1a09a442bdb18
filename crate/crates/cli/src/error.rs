use std::io;
use std::path::PathBuf;

use gradlearn_core::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("replay mismatch: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Usage,
    DataFormat,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::DataFormat => 3,
            Category::Numerical => 4,
        }
    }
}

impl CliError {
    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            CliError::Usage(_) => Category::Usage,
            CliError::Format { .. } | CliError::Io { .. } => Category::DataFormat,
            CliError::Replay(_) => Category::Numerical,
            CliError::Core(e) => core_category(e),
        }
    }

    /// One-line JSON object for the diagnostic stream.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Diagnostic<'a> {
            category: Category,
            exit_code: i32,
            message: &'a str,
        }
        let message = self.to_string();
        let category = self.category();
        serde_json::to_string(&Diagnostic {
            category,
            exit_code: category.exit_code(),
            message: &message,
        })
        .expect("diagnostic serializes")
    }
}

fn core_category(e: &CoreError) -> Category {
    match e {
        CoreError::InvalidParameter { .. } | CoreError::SizeGuard { .. } => Category::Usage,
        CoreError::DimensionMismatch { .. }
        | CoreError::TooFewPoints { .. }
        | CoreError::InvalidLabel { .. }
        | CoreError::NotOrthonormal { .. } => Category::DataFormat,
        CoreError::DegenerateBandwidth
        | CoreError::NotPositiveDefinite { .. }
        | CoreError::SingularSystem { .. }
        | CoreError::EmptySpectrum => Category::Numerical,
        CoreError::Fold { source, .. } => core_category(source),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
