use thiserror::Error;

pub type Result<T, E = DcaaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DcaaError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("sphere radius {radius_m} m is below the collision-free minimum {min_radius_m} m")]
    Collision { radius_m: f64, min_radius_m: f64 },

    #[error("sub-arrays {first} and {second} are separated by {angle_rad} rad, below the bound {bound_rad} rad")]
    SeparationViolation {
        first: usize,
        second: usize,
        angle_rad: f64,
        bound_rad: f64,
    },

    #[error("model order {order} must be smaller than the number of RF chains {n_rf}")]
    ModelOrder { order: usize, n_rf: usize },

    #[error("no null found within the search span on the {axis} cut")]
    SearchFailure { axis: &'static str },

    #[error("no target was matched in any trial")]
    EmptyMatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
