use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the selection engine.
///
/// Every variant describes a violated precondition on caller input; none of
/// them is recoverable by retrying with the same arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptySample,
    InvalidParameter { name: &'static str, value: f64, expected: &'static str },
    LossOutOfRange { sample: usize, candidate: usize, objective: usize, value: f64 },
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    DuplicateCandidate(String),
    EmptyCandidateId,
    UnknownCandidate(String),
    DegenerateSplit { n_samples: usize, opt: usize },
    InvalidProblem(&'static str),
    CountExceedsTotal { count: usize, total: usize },
    ProvenanceViolation { candidate: String, expected: &'static str, found: &'static str },
    MixedLevels,
    CyclicGraph,
    NodeSetMismatch,
    InconsistentPosterior { i: usize, j: usize, sum: f64 },
    UnqueriedObservation(String),
    SessionStopped,
    NoStoppingCondition,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptySample => write!(f, "empty sample"),
            Error::InvalidParameter { name, value, expected } => {
                write!(f, "invalid {name} = {value}: expected {expected}")
            }
            Error::LossOutOfRange { sample, candidate, objective, value } => write!(
                f,
                "loss {value} at (sample {sample}, candidate {candidate}, objective {objective}) is outside [0, 1]"
            ),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            Error::DuplicateCandidate(id) => write!(f, "duplicate candidate identifier `{id}`"),
            Error::EmptyCandidateId => write!(f, "candidate identifiers must be non-empty"),
            Error::UnknownCandidate(id) => write!(f, "unknown candidate `{id}`"),
            Error::DegenerateSplit { n_samples, opt } => write!(
                f,
                "degenerate split: {opt} of {n_samples} samples assigned to the optimization split"
            ),
            Error::InvalidProblem(msg) => write!(f, "invalid problem: {msg}"),
            Error::CountExceedsTotal { count, total } => {
                write!(f, "count {count} exceeds sample size {total}")
            }
            Error::ProvenanceViolation { candidate, expected, found } => write!(
                f,
                "p-value for `{candidate}` comes from the {found} split, expected the {expected} split"
            ),
            Error::MixedLevels => write!(f, "confidence bounds have different levels"),
            Error::CyclicGraph => write!(f, "graph contains a cycle"),
            Error::NodeSetMismatch => write!(f, "graph nodes do not match the candidate set"),
            Error::InconsistentPosterior { i, j, sum } => {
                write!(f, "preference entries ({i},{j}) and ({j},{i}) sum to {sum}, expected 1")
            }
            Error::UnqueriedObservation(id) => {
                write!(f, "observation for `{id}`, which is not in the current query plan")
            }
            Error::SessionStopped => write!(f, "session already stopped"),
            Error::NoStoppingCondition => {
                write!(f, "adaptive run needs a query budget or a rejection target")
            }
        }
    }
}

impl core::error::Error for Error {}
