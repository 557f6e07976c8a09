use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("hierarchy has no root node")]
    MissingRoot,
    #[error("hierarchy has more than one root: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("parent links form a cycle through {0:?}")]
    CycleDetected(Vec<String>),
    #[error("node {node:?} names unknown parent {parent:?}")]
    UnknownParent { node: String, parent: String },
    #[error("node {node:?} has negative or non-finite weight {weight}")]
    NegativeWeight { node: String, weight: f64 },
    #[error("node {0:?} appears more than once")]
    DuplicateNode(String),
    #[error("empty node identifier")]
    EmptyNodeId,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} is the root and has no parent")]
    RootHasNoParent(String),
    #[error(
        "node {node:?} overlaps its partner on only {overlap} training points (need {required})"
    )]
    InsufficientOverlap {
        node: String,
        overlap: usize,
        required: usize,
    },
    #[error("series is constant on the compared window")]
    DegenerateVariance,
    #[error("distance variance of an input is zero")]
    DegenerateDistanceVariance,
    #[error("design matrix for the children of {0:?} is singular")]
    SingularDesign(String),
    #[error("node {0:?} has no children")]
    NoChildren(String),
    #[error("child {child:?} of {parent:?} has no weight")]
    MissingWeight { parent: String, child: String },

    #[error("non-positive level {value} at position {position}")]
    NonPositiveLevel { position: usize, value: f64 },
    #[error("series {0:?} is too short to split into train and test")]
    EmptySeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid synthetic panel spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in series {node:?} at position {position}")]
    NonFiniteValue { node: String, position: usize },

    #[error("empty input sequence")]
    EmptyInput,
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize, last_finite: Vec<f64> },
    #[error("no training data{}", node_suffix(.0))]
    NoTrainingData(Option<String>),
    #[error("node {0:?} is missing from the pretrained bundle")]
    MissingPretrained(String),
    #[error("node {0:?} has no fitted model")]
    MissingModel(String),
    #[error("not enough history before origin {origin} for lookback {rho} at node {node:?}")]
    InsufficientHistory {
        node: String,
        origin: usize,
        rho: usize,
    },
    #[error("expected {expected} values, got {found}")]
    WrongLength { expected: usize, found: usize },

    #[error("input vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("baseline RMSE is zero")]
    ZeroBaseline,
    #[error("baseline model is missing for node {0:?}")]
    MissingBaseline(String),

    #[error("node {node:?}: {source}")]
    AtNode {
        node: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

fn node_suffix(node: &Option<String>) -> String {
    match node {
        Some(n) => alloc::format!(" for node {n:?}"),
        None => String::new(),
    }
}

impl Error {
    /// Wraps the error with the node it was raised for.
    pub fn at_node(self, node: &str) -> Self {
        match self {
            e @ Error::AtNode { .. } => e,
            e => Error::AtNode {
                node: node.into(),
                source: alloc::boxed::Box::new(e),
            },
        }
    }

    /// Strips any node attribution.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } => source.root_cause(),
            e => e,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root_cause(), Error::DivergenceDetected { .. })
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
