use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("height cap must be positive, got {0}")]
    NonPositiveCap(f64),
    #[error("new cap {new} does not exceed current cap {old}")]
    CapNotRaised { old: f64, new: f64 },
    #[error("requested window would hold about {expected:.3e} points, above the limit {limit:.0e}")]
    TooManyPoints { expected: f64, limit: f64 },
    #[error("interval must be finite here")]
    InfiniteInterval,
    #[error("interval [{lo}, {hi}] is empty")]
    EmptyInterval { lo: i64, hi: i64 },
    #[error("interval [{lo}, {hi}] is not inside the realized window [{wlo}, {whi}]")]
    OutsideWindow { lo: i64, hi: i64, wlo: i64, whi: i64 },
    #[error("new end {new_lo} does not enlarge the window beyond {lo}")]
    NotExtended { lo: i64, new_lo: i64 },
    #[error("point set was loaded from a file and cannot be extended")]
    NotGeneratorBacked,
    #[error("two points share the height {0}")]
    DuplicateHeight(f64),
    #[error("point ({x}, {y}) has a negative or non-finite coordinate")]
    BadPoint { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the interval [{lo}, {hi}]")]
    PointOutsideInterval { x: f64, y: f64, lo: i64, hi: i64 },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("generator parameter sigma must be at least 2, got {0}")]
    BadSigma(u32),
    #[error(
        "no unclaimed point for vertex {vertex}: columns [{lo}, {}] are exhausted below cap {cap}",
        vertex - 1
    )]
    Exhausted { vertex: i64, lo: i64, cap: f64 },
    #[error("stabilization budget exhausted with {} unstable target vertices", unstable.len())]
    Unstable { unstable: Vec<i64> },
    #[error("unknown estimand `{0}`")]
    UnknownEstimand(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
