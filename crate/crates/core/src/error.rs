use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index}: lower bound {lower} must be strictly below upper bound {upper}")]
    EmptyInterior { index: usize, lower: f64, upper: f64 },
    #[error("coordinate {index}: bound {value} is not finite")]
    UnboundedBox { index: usize, value: f64 },
    #[error("halfspace has a zero or non-finite normal")]
    DegenerateHalfspace,
    #[error("entry {index} = {value} is outside the domain of the entropic generating function")]
    OutsideDomain { index: usize, value: f64 },
    #[error("projection did not converge in {iterations} iterations (residual {residual:e})")]
    ProjectionNotConverged { iterations: usize, residual: f64 },
    #[error("no verifiable interior ball: {0}")]
    NoInteriorBall(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("query radius {radius} must be positive and finite")]
    NonPositiveRadius { radius: f64 },
    #[error("query radius {radius} exceeds the interior ball radius {ball_radius}")]
    RadiusExceedsBall { radius: f64, ball_radius: f64 },
    #[error("direction has norm {norm}, expected a unit vector")]
    NotUnit { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("feedback for timestamp {timestamp} was ingested twice")]
    DuplicateTimestamp { timestamp: u64 },
    #[error("feedback timestamps start at 1")]
    ZeroTimestamp,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("pseudo-gradient is not strongly monotone (min symmetric eigenvalue {min_eigenvalue:e})")]
    NotStronglyMonotone { min_eigenvalue: f64 },
    #[error("the game does not expose an analytic pseudo-gradient")]
    NoPseudoGradient,
    #[error("critical-point solver did not converge in {iterations} iterations (last step {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("schedule validation failed in strict mode: {0}")]
    Schedule(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Game(#[from] GameError),
}

impl RunError {
    /// True for failures that come from the numerics rather than from the
    /// configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RunError::Geometry(GeometryError::ProjectionNotConverged { .. })
                | RunError::Game(GameError::NotConverged { .. })
                | RunError::Delay(_)
        )
    }
}
