use std::path::PathBuf;

use crate::grid::Coord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("could not place {agents} agents after {budget} sampling attempts")]
    InstanceInfeasible { agents: usize, budget: usize },

    #[error("agent {0} is inactive and cannot observe")]
    ObserverInactive(usize),

    #[error("expected {expected} actions, got {got}")]
    MalformedActionSet { expected: usize, got: usize },

    #[error("goal {0} is blocked in the belief map")]
    GoalBlocked(Coord),

    #[error("planner is stale: computed at belief version {planned}, belief is at {current}")]
    StalePlanner { planned: u64, current: u64 },

    #[error("delta claims {cell} is {claimed} but belief already holds {known}")]
    ConflictingEvidence {
        cell: Coord,
        claimed: &'static str,
        known: &'static str,
    },

    #[error("coordinate {0} is outside the map")]
    OutOfBounds(Coord),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("plot {}: {msg}", path.display())]
    Plot { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
