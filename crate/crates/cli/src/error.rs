use thiserror::Error;

/// Failure of one CLI run, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<extruder_thermal::Error> for CliError {
    fn from(e: extruder_thermal::Error) -> Self {
        use extruder_thermal::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Assembly(m) => CliError::Config(format!("model assembly: {m}")),
            E::Data(m) => CliError::Data(m),
            E::Numeric(m) => CliError::Numeric(m),
            E::Design(m) => CliError::Numeric(format!("observer design: {m}")),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_data(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
