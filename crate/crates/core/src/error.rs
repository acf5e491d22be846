use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("action {action} outside [-{a_max}, {a_max}]")]
    ActionOutOfRange { action: f64, a_max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("forward cache does not belong to this network state ({0})")]
    StaleCache(String),

    #[error("degenerate vector norm (below {0})")]
    DegenerateNorm(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("too few positive calibration pairs: {found} < {required}; increase the pair count")]
    TooFewPositives { found: usize, required: usize },

    #[error("no positive calibration pairs")]
    NoPositives,

    #[error("projector provenance mismatch: filter {filter}, threshold {threshold}")]
    ProvenanceMismatch { filter: String, threshold: String },

    #[error("epsilon mismatch: {0} vs {1}")]
    EpsilonMismatch(f64, f64),

    #[error("missing projector for conditioning strategy {0}")]
    MissingProjector(String),

    #[error("missing prototypes for the prototype conditioning strategy")]
    MissingPrototypes,

    #[error("replay buffer holds {have} transitions, warmup needs {need}")]
    ReplayWarmup { have: usize, need: usize },

    #[error("conditioning strategy mismatch: {0}")]
    StrategyMismatch(String),

    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("no safe initial state found after {0} attempts")]
    NoSafeStart(usize),

    #[error("missing calibration cache for epsilon {0}")]
    MissingCache(f64),

    #[error("constraint ({0}, {1}) outside the environment bounds")]
    ConstraintOutOfBounds(f64, f64),

    #[error("heatmap resolution {0} exceeds the cap of {1}")]
    ResolutionCap(u32, u32),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
