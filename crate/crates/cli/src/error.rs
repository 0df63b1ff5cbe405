use thiserror::Error;

/// Exit status for successful runs.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("column '{0}' not found in the header")]
    MissingColumn(String),
    #[error("parse error at line {line}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse { line: usize, column: Option<String>, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] bvs_core::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        CliError::Parse { line, column: None, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bvs_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::MissingColumn(_) | CliError::Parse { .. } | CliError::Io(_) => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Config(_) | E::TooLarge(_) => EXIT_CONFIG,
                E::ShapeMismatch(_) | E::Domain(_) => EXIT_DATA,
                E::Numerical(_) | E::QuadratureNotConverged(_) | E::EmptyChain => EXIT_NUMERICAL,
            },
        }
    }
}
