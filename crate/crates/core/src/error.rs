use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero period")]
    ZeroPeriod,
    #[error("degenerate duty: {0}")]
    DegenerateDuty(f64),
    #[error("empty series")]
    EmptySeries,
    #[error("series spans {got_s} s, need at least {need_s} s")]
    SpanTooShort { need_s: f64, got_s: f64 },
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("time {0} s outside environment profile")]
    OutsideProfile(f64),
    #[error("invalid environment profile: {0}")]
    InvalidProfile(String),
    #[error("negative panel voltage {0} V")]
    NegativeVoltage(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("voltage collapse: sweep did not converge after {iterations} iterations")]
    VoltageCollapse { iterations: usize },
    #[error("feeder data line {line}: {msg}")]
    FeederData { line: usize, msg: String },
    #[error("unknown scenario kind '{0}'")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
