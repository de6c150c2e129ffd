use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("grid domain [{grid_min}, {grid_max}] does not match basis domain [{basis_min}, {basis_max}]")]
    DomainMismatch {
        grid_min: f64,
        grid_max: f64,
        basis_min: f64,
        basis_max: f64,
    },

    #[error("grid has {nodes} nodes; at least {required} uniform nodes are needed for exact projection")]
    InsufficientResolution { nodes: usize, required: usize },

    #[error("non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("{failed} of {total} trajectories blew up; fewer than half succeeded")]
    TooManyFailures { failed: usize, total: usize },

    #[error("non-finite training loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("kernel bandwidth {epsilon} disconnects point {index} from every other point")]
    DisconnectedKernel { epsilon: f64, index: usize },

    #[error("no eigenvalue exceeds delta * sigma_0 (delta = {delta}); use a smaller delta")]
    EmptySpectrum { delta: f64 },

    #[error("snapshot matrix has rank 0")]
    RankZero,

    #[error("every decoder inversion diverged: {0}")]
    InversionFailed(String),

    #[error("no stored model named '{alias}'; available: {}", available.join(", "))]
    MissingArtifact { alias: String, available: Vec<String> },

    #[error("incompatible pipeline configuration: {0}")]
    IncompatibleConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure is numerical rather than a problem with inputs or files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::TooManyFailures { .. }
                | Error::TrainingDiverged { .. }
                | Error::DisconnectedKernel { .. }
                | Error::EmptySpectrum { .. }
                | Error::RankZero
                | Error::InversionFailed(_)
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
