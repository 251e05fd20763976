use nalgebra::Complex;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: String,
        got: String,
    },

    #[error("non-finite entry in `{0}`")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("system is not Hurwitz (spectral abscissa {abscissa:e})")]
    Unstable { abscissa: f64 },

    #[error("eigenvalue solver did not converge")]
    EigenNonConvergence,

    #[error(
        "singular Sylvester operator: eigenvalue sum {}{:+}i is numerically zero",
        .eigenvalue_sum.re, .eigenvalue_sum.im
    )]
    SingularSylvester { eigenvalue_sum: Complex<f64> },

    #[error("matrix exponential overflow (norm of A*t = {norm:e}); rescale the problem")]
    ExpOverflow { norm: f64 },

    #[error("matrix logarithm argument has eigenvalue {}{:+}i on the closed negative real axis", .eigenvalue.re, .eigenvalue.im)]
    BranchCut { eigenvalue: Complex<f64> },

    #[error("matrix logarithm square-root phase did not converge")]
    LogNonConvergence,

    #[error("singular shifted solve (shift {}{:+}i)", .shift.re, .shift.im)]
    SingularShift { shift: Complex<f64> },

    #[error("controllability Gramian is singular: regularize it or restrict x0 to the controllable subspace")]
    SingularGramian,

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("biorthogonality violated: max |W^T V - I| = {0:e}")]
    Biorthogonality(f64),

    #[error("requested order {requested} exceeds the numerical rank {max} of Y^T Z")]
    RankExceeded { requested: usize, max: usize },

    #[error(
        "sigma_{order} = {sigma:e} is below the conditioning floor {floor:e}; choose a smaller order"
    )]
    BelowFloor { order: usize, sigma: f64, floor: f64 },

    #[error("quadrature did not converge within the node budget ({0})")]
    Quadrature(String),

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(field: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            field: field.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
