use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("boundary face {face} carries nonzero flux {value:e}")]
    BoundaryFlux { face: usize, value: f64 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("position {position} outside tabulated range [0, {max}]")]
    OutsideTable { position: f64, max: f64 },
    #[error("singular tensor at cell {cell} (det = {det:e})")]
    SingularTensor { cell: usize, det: f64 },
    #[error("tensor not positive definite at cell {cell} (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { cell: usize, eigenvalue: f64 },
    #[error("flux solve did not converge (relative residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("density must be positive, found {value:e} at cell {cell}")]
    NonPositiveDensity { cell: usize, value: f64 },
    #[error("density negative beyond round-off: {value:e} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("zero eigenvalue in spectral expansion (index {0})")]
    ZeroEigenvalue(usize),
    #[error("spectral problem too large: {0} unknowns")]
    TooLarge(usize),
    #[error("eigenvalue {0:e} has non-negligible imaginary part")]
    ComplexSpectrum(f64),
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("energy guard exhausted: dt fell below {dt:e}")]
    EnergyGuardExhausted { dt: f64 },
    #[error("positivity lost: min density {min:e}")]
    PositivityLoss { min: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("initial density is not normalizable: mass {mass}")]
    BadInitialMass { mass: f64 },
    #[error("fixed point iteration hit the iteration cap ({iterations}), residual {residual:e}")]
    MaxIterations {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("eigensolver stagnated after {0} iterations")]
    EigenStagnation(usize),
    #[error("trajectory too short: {0} snapshots")]
    TrajectoryTooShort(usize),
}
