use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{op} requires dim {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },

    #[error("wavevector component {k} on axis {axis} is not a multiple of 2π/{extent}")]
    NonCommensurate { axis: usize, k: f64, extent: f64 },

    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),

    #[error("displacement {max:.3e} exceeds the bound {bound:.3e}; reduce the time step or noise amplitude")]
    StepSize { max: f64, bound: f64 },

    #[error("diffusivity must be non-negative, got {0}")]
    NegativeDiffusivity(f64),

    #[error("stability bound violated: dt = {dt:.3e} > {limit:.3e}")]
    Stability { dt: f64, limit: f64 },

    #[error("positivity lost in {field} at step {step} (min = {min:.3e})")]
    PositivityLost { field: &'static str, step: usize, min: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("malformed field snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stamps a positivity failure with the step at which it happened.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::PositivityLost { field, min, .. } => Error::PositivityLost { field, step, min },
            other => other,
        }
    }
}
