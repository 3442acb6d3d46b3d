use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("cluster `{0}` has no outcome vector")]
    MissingOutcome(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("randomized cluster `{0}` must carry both an arm and outcomes")]
    IncompleteTrialCluster(String),
    #[error("duplicate cluster id `{0}`")]
    DuplicateId(String),
    #[error("arm `{0}` has no randomized clusters")]
    EmptyArm(String),
    #[error("a dataset needs at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("cluster `{0}` has no individuals")]
    EmptyCluster(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("outcome {value} in cluster `{cluster}` lies outside [0, 1]")]
    OutcomeOutOfRange { cluster: String, value: f64 },
    #[error("feature specification selects no covariates")]
    EmptySpec,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("separation in {model}: {detail}")]
    Separation { model: String, detail: String },
    #[error("singular system in {0}; remove collinear features or add regularization")]
    SingularSystem(String),
    #[error("elastic net requires standardized features")]
    NotStandardized,
    #[error("no convergence in {model} after {iterations} iterations (last change {last_change:e})")]
    NonConvergence { model: String, iterations: usize, last_change: f64 },
    #[error("treatment probabilities sum to {0}, not 1")]
    ProbabilitiesDontSumToOne(f64),
    #[error("arm `{0}` has too few randomized clusters to fit its models")]
    TooFewTrialClusters(String),
    #[error("no randomized clusters assigned to arm `{0}`")]
    NoTreatedClusters(String),
    #[error("no non-randomized clusters in the dataset")]
    NoNonRandomizedClusters,
    #[error("estimates cannot be combined: {0}")]
    MismatchedEstimates(String),
    #[error("invalid fold count {folds}: need 2 <= folds <= {max}")]
    TooManyFolds { folds: usize, max: usize },
    #[error("estimate carries no influence values")]
    NoInfluenceValues,
    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailedReplicates { failed: usize, total: usize },
    #[error("arm `{0}` has fewer than two randomized clusters")]
    FewerThanTwoClusters(String),
}

impl Error {
    /// Stable machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingOutcome(_) => "MissingOutcome",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IncompleteTrialCluster(_) => "IncompleteTrialCluster",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyArm(_) => "EmptyArm",
            Error::TooFewClusters(_) => "TooFewClusters",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::NonFinite(_) => "NonFinite",
            Error::OutcomeOutOfRange { .. } => "OutcomeOutOfRange",
            Error::EmptySpec => "EmptySpec",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Separation { .. } => "Separation",
            Error::SingularSystem(_) => "SingularSystem",
            Error::NotStandardized => "NotStandardized",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::ProbabilitiesDontSumToOne(_) => "ProbabilitiesDontSumToOne",
            Error::TooFewTrialClusters(_) => "TooFewTrialClusters",
            Error::NoTreatedClusters(_) => "NoTreatedClusters",
            Error::NoNonRandomizedClusters => "NoNonRandomizedClusters",
            Error::MismatchedEstimates(_) => "MismatchedEstimates",
            Error::TooManyFolds { .. } => "TooManyFolds",
            Error::NoInfluenceValues => "NoInfluenceValues",
            Error::TooManyFailedReplicates { .. } => "TooManyFailedReplicates",
            Error::FewerThanTwoClusters(_) => "FewerThanTwoClusters",
        }
    }
}
