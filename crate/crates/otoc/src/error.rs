use thiserror::Error;

/// Failures of a CLI run, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    #[error("validation failed: {0}")]
    Validation(String),
    /// The computation itself failed (exit 3).
    #[error("numerical failure in {module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: otoc_core::Error,
    },
    /// Reading or writing run files (exit 3).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical { .. } | CliError::Io { .. } => 3,
        }
    }

    /// Attributes a core error to `module`; parameter and energy errors are
    /// configuration problems, the rest numerical.
    pub fn from_core(module: &'static str, e: otoc_core::Error) -> Self {
        match e {
            otoc_core::Error::InvalidParameter { .. } | otoc_core::Error::InvalidEnergy { .. } => {
                CliError::Validation(format!("{module}: {e}"))
            }
            source => CliError::Numerical { module, source },
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// `.in_module("quantum")?` on core results.
pub trait CoreResultExt<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> CoreResultExt<T> for otoc_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(module, e))
    }
}
