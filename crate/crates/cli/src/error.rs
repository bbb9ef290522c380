use std::fmt;
use std::process::ExitCode;

use xinet_core::Error as CoreError;

/// Failure class, mapped one-to-one onto the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    /// Prints the one-line diagnostic and returns the exit code.
    pub fn report(&self) -> ExitCode {
        eprintln!("{}", self.line());
        ExitCode::from(self.kind.code())
    }

    /// `error[<kind>]: <message>` with newlines flattened.
    pub fn line(&self) -> String {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {flat}", self.kind.label())
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::InvalidInput(_) | CoreError::Unknown { .. } => Kind::Usage,
            CoreError::Io { .. }
            | CoreError::NotFound { .. }
            | CoreError::Parse { .. }
            | CoreError::Manifest(_)
            | CoreError::Format(_)
            | CoreError::VariantMismatch { .. }
            | CoreError::Json(_) => Kind::Data,
            CoreError::Tensor(_) | CoreError::UnstableFilter(_) | CoreError::Numeric(_) => Kind::Numeric,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub type CliResult<T> = Result<T, CliError>;
