use std::io;

/// Errors raised across the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported order {order}: orders above {max} are not supported")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("series did not converge within {terms} terms (partial sum {partial_sum:e})")]
    Convergence { terms: usize, partial_sum: f64 },

    #[error("training diverged at iteration {iteration}: empirical risk {risk:e}")]
    Divergence { iteration: usize, risk: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    /// IO error annotated with the offending path.
    pub fn at_path(path: &std::path::Path, e: io::Error) -> Self {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    /// Process exit code for the CLI: 1 check failed, 2 config/argument
    /// error, 3 IO error, 4 numeric error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CheckFailed(_) => 1,
            Error::InvalidArgument(_)
            | Error::UnsupportedOrder { .. }
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Config { .. } => 2,
            Error::Io(_) => 3,
            Error::Numeric(_) | Error::Convergence { .. } | Error::Divergence { .. } => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_documented_table() {
        assert_eq!(Error::CheckFailed("x".into()).exit_code(), 1);
        assert_eq!(Error::config("d", "missing").exit_code(), 2);
        assert_eq!(Error::invalid("n = 0").exit_code(), 2);
        assert_eq!(Error::Io(io::Error::other("x")).exit_code(), 3);
        assert_eq!(
            Error::Divergence {
                iteration: 3,
                risk: 1e7
            }
            .exit_code(),
            4
        );
    }
}
