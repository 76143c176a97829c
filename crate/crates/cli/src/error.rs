use gaprisk_core::error::GapRiskError;
use serde::Serialize;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    Config,
    Data,
    Solver,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Solver => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: ErrorClass,
            exit_code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Record {
            error: self.class,
            exit_code: self.exit_code(),
            message: &self.message,
        })
        .expect("plain record serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} error: {}", self.class, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GapRiskError> for CliError {
    fn from(e: GapRiskError) -> Self {
        use GapRiskError::*;
        let class = match &e {
            InvalidParameter { .. } => ErrorClass::Config,
            Data { .. } | Io(_) | InsufficientData { .. } => ErrorClass::Data,
            Domain(_) | Convergence { .. } | NoBracket(_) | NegativeHazard { .. } | Unattainable(_)
            | NonMonotone(_) | DegenerateRegression(_) | Optimization(_) => ErrorClass::Solver,
        };
        Self {
            class,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(format!("writing csv: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io: {e}"))
    }
}
