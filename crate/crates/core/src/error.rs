use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative entry in {field} at index {index}: {value}")]
    NegativeEntry {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("non-finite entry in {0}")]
    NonFiniteParameter(&'static str),

    #[error("contact matrix differs from rho * B at ({i}, {j}): A = {a}, rho * B = {product}")]
    ContactMismatch {
        i: usize,
        j: usize,
        a: f64,
        product: f64,
    },

    #[error("edge probability rho[{i}][{j}] / n = {value} exceeds 1")]
    EdgeProbability { i: usize, j: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),

    #[error("negative compartment {value} for group {group} at t = {time}")]
    NegativeCompartment { group: usize, value: f64, time: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("node {0} is not susceptible")]
    NotSusceptible(usize),

    #[error("edge observed at {last_observed} is later than query time {now}")]
    ObservationInFuture { last_observed: f64, now: f64 },

    #[error("window [{k0}, {k1}) lies outside a trajectory of {len} samples")]
    WindowOutOfRange { k0: usize, k1: usize, len: usize },

    #[error("trajectory is not sampled at unit-day spacing (sample {index} at t = {time})")]
    NonUnitSpacing { index: usize, time: f64 },

    #[error("solver exceeded {iterations} iterations without meeting the optimality tolerance")]
    IterationCap { iterations: usize },

    #[error("constrained solve ended infeasible (distance {distance} > radius {radius})")]
    Infeasible { distance: f64, radius: f64 },

    #[error("phase [{start}, {end}) is shorter than 2 days")]
    PhaseTooShort { start: usize, end: usize },

    #[error("data too short: {len} samples, need at least {needed}")]
    DataTooShort { len: usize, needed: usize },

    #[error("line {line}: gap in dates ({prev} followed by {next})")]
    DateGap {
        line: usize,
        prev: String,
        next: String,
    },

    #[error("line {line}: malformed count {value:?}")]
    MalformedCount { line: usize, value: String },

    #[error("line {line}: negative count {value}")]
    NegativeCount { line: usize, value: i64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error(
        "cumulative count {count} exceeds population {population} of group {group} on day {day}"
    )]
    CountExceedsPopulation {
        group: usize,
        day: usize,
        count: f64,
        population: u64,
    },

    #[error("negative active-infection count {value} for group {group} on day {day}")]
    NegativeInfected {
        group: usize,
        day: usize,
        value: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState(_)
                | Error::NegativeCompartment { .. }
                | Error::IterationCap { .. }
                | Error::Infeasible { .. }
        )
    }
}
