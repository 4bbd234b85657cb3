use thiserror::Error;

pub type Result<T, E = ConvoyError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ConvoyError {
    #[error("singular {what}: distance {distance:e} is below the singularity guard")]
    Singular { what: &'static str, distance: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate ordering: robot {robot} projects onto the centroid")]
    DegenerateOrdering { robot: u32 },

    #[error("ordering needs at least {needed} active robots, got {got}")]
    TooFewRobots { needed: usize, got: usize },

    #[error("ill-conditioned linear system (condition number {0:e})")]
    IllConditioned(f64),

    #[error("target velocity undefined: target sits on the circle center")]
    CircleCenter,

    #[error("qp for robot {robot} at t={t:.4}: {status:?}")]
    Solver {
        robot: u32,
        t: f64,
        status: crate::qp::SolveStatus,
    },

    #[error("step failed for robot {robot} at t={t:.4}: {source}")]
    Step {
        robot: u32,
        t: f64,
        #[source]
        source: Box<ConvoyError>,
    },

    #[error("simulation produced an empty log (duration {duration}, dt {dt})")]
    EmptyLog { duration: f64, dt: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
