use std::path::PathBuf;

use crate::model::{CellId, SliceId, UeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("slice {0} has no member UEs")]
    EmptySlice(SliceId),

    #[error("UE {ue} has zero efficiency at cell {cell}")]
    ZeroEfficiency { ue: UeId, cell: CellId },

    #[error("UE {0} is not covered by any cell")]
    UnreachableUe(UeId),

    #[error("no CQI traces supplied")]
    EmptyTraceSet,

    #[error("user distributions cover different UE sets")]
    KeySetMismatch,

    #[error("allocation violates {constraint} at {at}: sum {actual} != {expected}")]
    InvalidAllocation {
        constraint: &'static str,
        at: String,
        actual: f64,
        expected: f64,
    },

    #[error("could not place small cells after {attempts} attempts")]
    PlacementInfeasible { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trace {path}: {reason}")]
    Trace { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
