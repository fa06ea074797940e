use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}")]
    Csv(String),
    /// A module finished with an error status; artifacts were still written.
    #[error("{0}")]
    Status(String),
    #[error(transparent)]
    Vortex(#[from] nvortex::VortexError),
    #[error(transparent)]
    Orbit(#[from] nvortex::orbits::OrbitError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(..) | CliError::Csv(_) => 1,
            CliError::Status(_) | CliError::Vortex(_) | CliError::Orbit(_) => 2,
        }
    }
}
