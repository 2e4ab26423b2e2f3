use std::fmt;

use zeeman_eit::EitError;

pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FIT: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    /// Every validation problem found.
    Config(Vec<String>),
    Core {
        stage: &'static str,
        source: EitError,
    },
    Io(String),
    SelfCheck {
        failed: usize,
    },
}

impl CliError {
    pub fn core(stage: &'static str, source: EitError) -> Self {
        CliError::Core { stage, source }
    }

    pub fn io(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::SelfCheck { .. } => EXIT_CHECK,
            CliError::Core { source, .. } => match source {
                EitError::Baseline(_) | EitError::Fit { .. } | EitError::Classification { .. } => EXIT_FIT,
                EitError::Import(_) => EXIT_IO,
                EitError::InvalidArgument(_) | EitError::DegenerateQuantizationAxis => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(errs) => {
                write!(
                    f,
                    "invalid configuration ({} problem{}):",
                    errs.len(),
                    if errs.len() == 1 { "" } else { "s" }
                )?;
                for e in errs {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
            CliError::Core { stage, source } => write!(f, "[{stage}] {source}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
            CliError::SelfCheck { failed } => write!(f, "self-check: {failed} check(s) failed"),
        }
    }
}
