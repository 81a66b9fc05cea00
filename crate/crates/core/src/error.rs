use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A cascaded coefficient that must be inverted is numerically zero.
    #[error("cascaded coefficient at element {index} is numerically zero (|h| = {magnitude:e})")]
    SingularCascade { index: usize, magnitude: f64 },

    /// No usable reference row exists for a column of the BS-IRS-A1 estimate.
    #[error("no usable reference row for IRS element {column}")]
    ReferenceRow { column: usize },

    #[error("rank-deficient system: numerical rank {rank} < {required} (condition number {condition:e})")]
    RankDeficient {
        rank: usize,
        required: usize,
        condition: f64,
    },

    #[error("infeasible protocol: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCascade { .. } | Error::ReferenceRow { .. } | Error::RankDeficient { .. }
        )
    }
}
