use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Chebyshev order {0}: at least 2 is required")]
    InvalidOrder(usize),

    #[error("unsupported derivative order {0}: only 1 and 2 are available")]
    UnsupportedDerivative(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point ({x}, {y}) lies outside [-1, 1]^2")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("parameter {mu:?} lies outside the parameter domain")]
    ParameterOutsideDomain { mu: Vec<f64> },

    #[error("truth system is singular or too ill-conditioned at mu = {mu:?}")]
    SingularTruth { mu: Vec<f64> },

    #[error("eigensolver did not converge after {iterations} iterations at mu = {mu:?}")]
    EigenNonConvergence { mu: Vec<f64>, iterations: usize },

    #[error("stability lower bound must be positive, got {0}")]
    InvalidStability(f64),

    #[error("residual radicand {radicand:e} is negative beyond tolerance (e1 = {e1:e})")]
    NumericalInconsistency { radicand: f64, e1: f64 },

    #[error("reduced normal equations are ill-conditioned at N = {n}")]
    IllConditionedModel { n: usize },

    #[error("reduced collocation system is singular at n = {n}")]
    SingularReducedSystem { n: usize },

    #[error("requested basis size {requested} but the model holds {available}")]
    BasisSizeOutOfRange { requested: usize, available: usize },

    #[error("training set exhausted: all {0} parameters are already selected")]
    TrainingExhausted(usize),

    #[error("degenerate basis: snapshot {iteration} is numerically inside the current span")]
    DegenerateBasis { iteration: usize },

    #[error("greedy iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("study at n = {n}, mu = {mu:?}: {source}")]
    Study {
        n: usize,
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("expression `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("unsupported artifact version {found} (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case identifier used by the CLI's one-line error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidOrder(_) => "invalid_order",
            Error::UnsupportedDerivative(_) => "unsupported_derivative",
            Error::Shape(_) => "shape",
            Error::PointOutsideDomain { .. } => "point_outside_domain",
            Error::ParameterOutsideDomain { .. } => "parameter_outside_domain",
            Error::SingularTruth { .. } => "singular_truth",
            Error::EigenNonConvergence { .. } => "eigen_non_convergence",
            Error::InvalidStability(_) => "invalid_stability",
            Error::NumericalInconsistency { .. } => "numerical_inconsistency",
            Error::IllConditionedModel { .. } => "ill_conditioned_model",
            Error::SingularReducedSystem { .. } => "singular_reduced_system",
            Error::BasisSizeOutOfRange { .. } => "basis_size_out_of_range",
            Error::TrainingExhausted(_) => "training_exhausted",
            Error::DegenerateBasis { .. } => "degenerate_basis",
            Error::Training { source, .. } | Error::Study { source, .. } => source.kind(),
            Error::Expression { .. } => "expression",
            Error::Config(_) => "config",
            Error::Artifact(_) => "artifact",
            Error::ArtifactVersion { .. } => "artifact_version",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn in_iteration(self, iteration: usize) -> Error {
        Error::Training {
            iteration,
            source: Box::new(self),
        }
    }
}
