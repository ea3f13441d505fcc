use histories_lab_core::Error as CoreError;

/// Failures surfaced by the runner.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },

    #[error("scenario kind `{found}` does not match subcommand `{expected}`")]
    KindMismatch { expected: String, found: String },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        LabError::Core {
            context: context.into(),
            source,
        }
    }

    /// 3 for tolerance breaches, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(_) => 3,
            LabError::Core { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }
}

/// Attaches the scenario key a core error came from.
pub(crate) trait Context<T> {
    fn at(self, key: &str) -> Result<T, LabError>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn at(self, key: &str) -> Result<T, LabError> {
        self.map_err(|e| LabError::core(key, e))
    }
}
