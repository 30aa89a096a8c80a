use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field evaluated {distance:.3} m from dipole {dipole}, inside the {radius:.3} m exclusion radius")]
    EvaluationInsideExclusionZone {
        dipole: usize,
        distance: f64,
        radius: f64,
    },

    #[error("gradient matrix is not symmetric and traceless (asymmetry {asymmetry:e}, trace {trace:e})")]
    NotSymmetricTraceless { asymmetry: f64, trace: f64 },

    #[error("magnetometer offsets do not form a cross layout: {0}")]
    DegenerateArray(String),

    #[error("no gyro samples in ({start}, {end}]")]
    EmptyInterval { start: f64, end: f64 },

    #[error("normal equations are singular; pose {pose} is not constrained")]
    SingularNormalEquations { pose: usize },

    #[error("information matrix is singular at pose {pose}")]
    SingularInformation { pose: usize },

    #[error("cost became non-finite at iteration {iteration}")]
    NonFiniteCost { iteration: usize },

    #[error("every invariant stream is constant (all maxima are zero)")]
    AllInvariantsConstant,

    #[error("relative covariance between poses {i} and {j} is singular")]
    SingularRelativeCovariance { i: usize, j: usize },

    #[error("no estimate timestamps overlap the ground truth")]
    NoOverlappingTimestamps,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
