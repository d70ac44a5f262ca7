use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("coupling matrix violates the {flag} condition: residual {residual:.3e} at ({row}, {col})")]
    HermiticityViolation {
        flag: &'static str,
        row: usize,
        col: usize,
        residual: f64,
    },
    #[error("non-finite entry in {0}")]
    NonFiniteEntry(&'static str),
    #[error("levels {0} and {1} have equal slopes but a nonzero coupling")]
    DegenerateSlopePair(usize, usize),
    #[error("level {0} has neither the strictly largest nor the strictly smallest slope")]
    SlopeNotExtremal(usize),
    #[error("slope ordering violated: {0}")]
    OrderViolation(String),
    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is singular")]
    Singular,
    #[error("step limit of {0} exceeded")]
    StepLimitExceeded(usize),
    #[error("step size {step:.3e} underflowed at s = {at:.6}; reduce couplings or loosen tolerances")]
    StepUnderflow { step: f64, at: f64 },
    #[error("log-probability {0:.1} overflows f64; use the log-space accessors")]
    Overflow(f64),
    #[error("column {0} of the probability table sums to zero")]
    ZeroColumn(usize),
    #[error("time {0} is within the pole tolerance of t = +-1")]
    PoleProximity(String),
    #[error("no branch point: {0}")]
    NoRoot(String),
    #[error("adaptive quadrature failed to reach tolerance ({0:.3e})")]
    QuadratureFailure(f64),
    #[error("r = {0} is inside the critical window around 1")]
    CriticalRegime(f64),
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("time {0} is too close to a crossing for the adiabatic expansion")]
    TooCloseToCrossing(f64),
    #[error("chemical-potential sweeps must be linear in time: {0}")]
    NotLinear(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown figure recipe {0:?}")]
    UnknownRecipe(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Numeric failures as opposed to bad input or refused regimes.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_)
                | Error::Singular
                | Error::StepLimitExceeded(_)
                | Error::StepUnderflow { .. }
                | Error::Overflow(_)
                | Error::QuadratureFailure(_)
        )
    }

    pub fn is_refused_regime(&self) -> bool {
        matches!(self, Error::CriticalRegime(_) | Error::PoleProximity(_))
    }

    /// Process exit code: 2 for bad input, 3 for numeric failure, 4 for a
    /// refused regime.
    pub fn exit_code(&self) -> i32 {
        if self.is_numeric() {
            3
        } else if self.is_refused_regime() {
            4
        } else {
            2
        }
    }
}
