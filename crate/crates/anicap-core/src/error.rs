use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input direction is not a unit vector (|z| = {norm})")]
    NonUnit { norm: f64 },
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("anisotropy is not admissible: {0}")]
    Inadmissible(String),
    #[error("omega0 = {omega0} outside the admissible interval ({lower}, {upper})")]
    ContactParameter { omega0: f64, lower: f64, upper: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("derivative check failed: max error {error:e} at z = {point:?}")]
    DerivativeMismatch { error: f64, point: [f64; 3] },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("degenerate triangle {face} (area {area:e})")]
    DegenerateTriangle { face: usize, area: f64 },
    #[error("transversality fails at boundary vertex {vertex}: <mu, E3> = {mu3:e}")]
    Transversality { vertex: usize, mu3: f64 },
    #[error("shape operator fit failed at vertex {0}")]
    FitFailed(usize),
    #[error("finite-difference stencil leaves the chart domain: {0}")]
    Stencil(String),
    #[error("chart is not immersive at ({u}, {v})")]
    Immersion { u: f64, v: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("step size underflow after {0} halvings")]
    StepUnderflow(usize),
    #[error("mesh degenerated: minimum triangle quality {0:e}")]
    Degenerated(f64),
}
