use std::fmt;

use iqc_core::IqcError;

/// Failure of a command, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files (exit 1).
    Config(String),
    /// The LMIs have no solution (exit 2).
    Infeasible(String),
    /// Solver or factorization breakdown (exit 3).
    Numerical(String),
    /// Verification found violated checks (exit 4).
    CheckFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }

    /// Maps library errors raised while solving or factorizing.
    pub fn from_core(context: &str, e: IqcError) -> Self {
        match e {
            IqcError::Infeasible { ref constraints } => {
                CliError::Infeasible(format!("{context}: LMIs infeasible, failing constraint(s): {}", constraints.join(", ")))
            }
            IqcError::IllPosed { .. } | IqcError::InvalidInterval { .. } | IqcError::InvalidArgument(_) | IqcError::Dimension(_) => {
                CliError::Config(format!("{context}: {e}"))
            }
            other => CliError::Numerical(format!("{context}: {other}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::CheckFailed(names) => write!(f, "verification failed: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}
