use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidSpec(String),
    #[error("moment E A^{s} diverges (alpha_inf = {alpha_inf})")]
    MomentDiverges { s: f64, alpha_inf: f64 },
    #[error("E A^s = 1 has no positive root")]
    NoPositiveRoot,
    #[error("environment is not transient to the right (E log A = {mean_log_a})")]
    NotTransient { mean_log_a: f64 },
    #[error("rho = {rho} outside ({lo}, {hi})")]
    OutOfDomain { rho: f64, lo: f64, hi: f64 },
    #[error("deviation window degenerate: n0 = {n0}, m = {m}")]
    WindowDegenerate { n0: i64, m: i64 },
    #[error("x = {x} outside the admissible window ({lo}, {hi}) at n = {n}")]
    OutsideWindow { n: u64, x: f64, lo: f64, hi: f64 },
    #[error("step/generation cap {cap} exceeded")]
    HorizonExceeded { cap: u64 },
    #[error("population overflow at generation {generation}")]
    PopulationOverflow { generation: u64 },
    #[error("no exact sampler for the tilted law: {0}")]
    TiltUnavailable(String),
    #[error("tail plateau unstable over grid (max/min = {ratio})")]
    GridUnstable { ratio: f64 },
    #[error("conditional moment did not stabilise (relative change {change})")]
    NotStabilized { change: f64 },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("log A is arithmetic; precise-constant experiments require a nonarithmetic law")]
    ArithmeticSpec,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::NotTransient { .. }
            | Error::NoPositiveRoot
            | Error::OutOfDomain { .. }
            | Error::WindowDegenerate { .. }
            | Error::OutsideWindow { .. }
            | Error::RegimeMismatch(_)
            | Error::ArithmeticSpec => 3,
            _ => 4,
        }
    }
}
