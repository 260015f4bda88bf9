//! Library side of the `gabo` command-line tool.

pub mod grid;
pub mod tools;
pub mod train;

use std::fmt;

use gabo_autodiff::AutodiffError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    /// Invalid config, missing or malformed input.
    pub const INPUT: u8 = 2;
    /// Training aborted on a non-finite value.
    pub const ABORTED: u8 = 3;
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::INPUT,
            error: error.into(),
        }
    }

    pub fn failure(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::FAILURE,
            error: error.into(),
        }
    }

    fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<gabo_core::Error> for CliError {
    fn from(e: gabo_core::Error) -> Self {
        use gabo_core::Error as E;
        let code = match &e {
            E::Aborted(_) | E::Autodiff(AutodiffError::NonFinite { .. }) => exit::ABORTED,
            E::Config { .. }
            | E::Parse { .. }
            | E::InvalidGraph { .. }
            | E::Graph(_)
            | E::OutOfVocab { .. }
            | E::Split(_)
            | E::Synth(_)
            | E::SingleClass { .. } => exit::INPUT,
            _ => exit::FAILURE,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `GABO_LOG` ∈ {quiet, info, debug}; unset means info.
pub fn log_level(value: Option<&str>) -> CliResult<log::LevelFilter> {
    match value {
        None | Some("info") => Ok(log::LevelFilter::Info),
        Some("quiet") => Ok(log::LevelFilter::Error),
        Some("debug") => Ok(log::LevelFilter::Debug),
        Some(other) => Err(CliError::input(anyhow::anyhow!(
            "GABO_LOG must be one of quiet, info, debug; got {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let cfg = gabo_core::Error::Config {
            field: "train.lr".into(),
            msg: "bad".into(),
        };
        assert_eq!(CliError::from(cfg).code, exit::INPUT);
        let abort = gabo_core::Error::Aborted("step 3".into());
        assert_eq!(CliError::from(abort).code, exit::ABORTED);
        let nf = gabo_core::Error::Autodiff(AutodiffError::NonFinite { op: "matmul" });
        assert_eq!(CliError::from(nf).code, exit::ABORTED);
        assert_eq!(
            CliError::from(gabo_core::Error::EmptyWindow).code,
            exit::FAILURE
        );
    }

    #[test]
    fn log_levels() {
        assert_eq!(log_level(None).unwrap(), log::LevelFilter::Info);
        assert_eq!(log_level(Some("quiet")).unwrap(), log::LevelFilter::Error);
        assert_eq!(log_level(Some("debug")).unwrap(), log::LevelFilter::Debug);
        assert_eq!(log_level(Some("loud")).unwrap_err().code, exit::INPUT);
    }
}
