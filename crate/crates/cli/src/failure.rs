use std::fmt;
use std::path::Path;

use anchor_est::Error;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or invalid configuration (exit 2).
    Config(String),
    /// The protocol does not fit the coherence windows (exit 3).
    Infeasible(String),
    /// Rank deficiency or a vanishing divisor during estimation (exit 4).
    Numerical(String),
    /// Output could not be written (exit 1).
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    /// Anything that goes wrong while loading an input file is a
    /// configuration problem, including a missing file.
    pub fn config_file(path: &Path, e: Error) -> Self {
        match e {
            Error::Io(io) => Failure::Config(format!("{}: {io}", path.display())),
            other => match Failure::from(other) {
                Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
                f => f,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Infeasible(_) => Failure::Infeasible(msg),
            Error::Io(_) | Error::Csv(_) => Failure::Io(msg),
            Error::InvalidArgument(_) | Error::Config(_) | Error::Dimension(_) | Error::Toml(_) => Failure::Config(msg),
            Error::SingularCascade { .. } | Error::ReferenceRow { .. } | Error::RankDeficient { .. } => {
                Failure::Numerical(msg)
            }
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}
