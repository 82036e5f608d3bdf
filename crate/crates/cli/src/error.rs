use bosepump_core::Error as CoreError;
use thiserror::Error;

use crate::config::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config schema: {0}")]
    Schema(String),
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("infeasible parameters: {0}")]
    Infeasible(CoreError),
    #[error("numerical failure: {0}")]
    Numerical(CoreError),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 2 is left to the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Invalid(_) => 4,
            CliError::Infeasible(_) => 5,
            CliError::Numerical(_) => 6,
            CliError::Io(_) => 7,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::KrylovNoConvergence { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::StepTooLarge { .. }
            | CoreError::GridMismatch => CliError::Numerical(e),
            CoreError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Infeasible(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let errs = [
            CliError::Usage(String::new()),
            CliError::Schema(String::new()),
            CliError::Invalid(vec![]),
            CliError::from(CoreError::ZeroInteraction),
            CliError::from(CoreError::NoConvergence { residuals: vec![] }),
            CliError::Io(String::new()),
        ];
        let mut codes: Vec<i32> = errs.iter().map(CliError::exit_code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
        assert!(!codes.contains(&0) && !codes.contains(&1));
    }
}
