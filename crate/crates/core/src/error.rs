use thiserror::Error;

/// Errors raised by the geometry, flow and kernel routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The adaptive integrator could not make progress. Carries the last
    /// accepted time and state.
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        state: Vec<f64>,
        reason: String,
    },

    #[error("no converged geodesic (best residual {best_residual:e})")]
    NoSolution { best_residual: f64 },

    #[error("distance failed at probe t = {probe}: {source}")]
    ProbeFailure {
        probe: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("finite-difference stencil failed near {point:?}: {reason}")]
    StencilFailure { point: Vec<f64>, reason: String },

    #[error("unsupported degeneracy: {0}")]
    UnsupportedDegeneracy(String),

    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("requested tolerance {requested:e} not achievable (best {achievable:e}): {reason}")]
    ToleranceUnachievable {
        requested: f64,
        achievable: f64,
        reason: String,
    },

    #[error("integration box too small; suggested radius {suggested_radius}")]
    BoxTooSmall { suggested_radius: f64 },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
}

pub type Result<T> = std::result::Result<T, Error>;
