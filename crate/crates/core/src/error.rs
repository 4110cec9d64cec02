use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ODE integration produced a non-finite state")]
    IntegrationFailure,

    #[error("non-epidemic regime: rho = {rho} is not below S(0) = {s0}")]
    NonEpidemic { rho: f64, s0: f64 },

    #[error("peak intensity {pi} outside ({lower}, {upper})")]
    PeakOutOfRange { pi: f64, lower: f64, upper: f64 },

    #[error("degenerate regression design: rank {rank} < {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    #[error("prior sampling failed after {0} attempts")]
    PriorRetriesExhausted(usize),

    #[error("chain initialization failed: no finite log-posterior after {0} prior draws")]
    InitializationFailed(usize),

    #[error("no posterior draws")]
    EmptyDraws,

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("cumulative `{series}` decreases on {date}")]
    NonMonotone {
        series: &'static str,
        date: NaiveDate,
    },

    #[error("{date}: recovered + deaths exceeds confirmed")]
    InconsistentCounts { date: NaiveDate },

    #[error("empty input")]
    Empty,

    #[error("date window {from}..={to} not covered: missing {missing}")]
    WindowGap {
        from: NaiveDate,
        to: NaiveDate,
        missing: NaiveDate,
    },

    #[error("active case count Z(t) = {z} is not positive on {date}")]
    NonPositiveActive { date: NaiveDate, z: i64 },

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("network: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
