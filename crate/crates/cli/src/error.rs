use std::fmt;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, configuration or input files (exit 2).
    Usage(anyhow::Error),
    /// Solver failure or infeasibility (exit 1).
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn usage_msg(msg: impl fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn numerical_msg(msg: impl fmt::Display) -> Self {
        CliError::Numerical(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self {
            CliError::Usage(e) | CliError::Numerical(e) => e,
        };
        write!(f, "{e:#}")
    }
}

pub trait Classify<T> {
    fn usage(self, context: &str) -> Result<T, CliError>;
    fn numerical(self, context: &str) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.into().context(context.to_string())))
    }

    fn numerical(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Numerical(e.into().context(context.to_string())))
    }
}
