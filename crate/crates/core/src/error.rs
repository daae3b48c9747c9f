use std::fmt;

use serde::Serialize;

/// Partial statistics reported when a simulation outgrows its particle cap.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialStats {
    pub max_particles: usize,
    pub particles_simulated: usize,
    pub alive_at_horizon_so_far: usize,
    /// Largest time reached by any lineage before aborting.
    pub time_reached: f64,
}

impl fmt::Display for PartialStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cap {} reached after {} particles ({} at horizon, time {:.3})",
            self.max_particles, self.particles_simulated, self.alive_at_horizon_so_far, self.time_reached
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource limit: {0}")]
    ResourceLimit(PartialStats),
    #[error("resource limit: horizon {horizon} exceeds the feasible {limit} for this population policy")]
    HorizonLimit { horizon: f64, limit: f64 },
    #[error("not found: particle {0}")]
    NotFound(u64),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDimension(_)
            | Error::InvalidArgument(_)
            | Error::UnknownExperiment(_)
            | Error::Config(_)
            | Error::NotFound(_) => 2,
            Error::ResourceLimit(_) | Error::HorizonLimit { .. } => 3,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
