use alloc::string::String;
use core::fmt;

/// Errors raised by the cloaking engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of two operands disagree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An input or intermediate value is NaN or infinite.
    NonFinite(&'static str),
    /// A graph violates one of its structural invariants.
    InvalidGraph(String),
    /// A parameter is outside its admissible range.
    InvalidArgument(String),
    /// A forward cache was produced by a different model state or graph.
    StaleCache,
    /// A split or evaluation set has no members.
    EmptySet(&'static str),
    /// A class has too few graphs to be stratified across all split parts.
    ClassTooSmall { class: usize, count: usize },
    /// A graph has fewer nodes than the trigger that should be injected.
    GraphTooSmall { graph: usize, nodes: usize, needed: usize },
    /// Surrogate training produced a non-finite loss.
    Diverged { step: usize, loss: f64 },
    /// The requested operation is not available for this model variant.
    Unsupported(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::StaleCache => write!(f, "forward cache does not match the current model or graph"),
            Error::EmptySet(what) => write!(f, "empty {what}"),
            Error::ClassTooSmall { class, count } => write!(
                f,
                "class {class} has only {count} graphs, fewer than the number of split parts"
            ),
            Error::GraphTooSmall {
                graph,
                nodes,
                needed,
            } => write!(f, "graph {graph} has {nodes} nodes, trigger needs {needed}"),
            Error::Diverged { step, loss } => {
                write!(f, "surrogate diverged at step {step} (loss = {loss})")
            }
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}
