use thiserror::Error;

/// Errors raised by the numerical and combinatorial routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precision too low: {0}")]
    PrecisionTooLow(String),
    #[error("bracket does not straddle the target value")]
    BracketInvalid,
    #[error("interval contains the critical value")]
    ContainsCriticalValue,
    #[error("rational rotation number detected: orbit of the flat interval returns after {period} iterates")]
    RationalDetected { rotations: u64, period: u64 },
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("tuning failed: {0}")]
    TuningFailed(String),
    #[error("level {level} too shallow: |f^-q_n| = {length:.3e} is not below |U|/4")]
    LevelTooShallow { level: usize, length: f64 },
    #[error("combinatorics violation: {0}")]
    CombinatoricsViolation(String),
    #[error("degenerate quadruple")]
    DegenerateQuadruple,
    #[error("chain enters the flat interval at step {step}")]
    ChainEntersFlat { step: usize },
    #[error("point lies inside preimage f^-{index} at level {level}")]
    InPreimage { index: u64, level: usize },
    #[error("point lies inside the flat interval")]
    InFlat,
    #[error("invalid code: {0}")]
    CodeInvalid(String),
    #[error("no reflection index satisfies the length inequality for host f^-{host}")]
    NoSuchK { host: u64 },
    #[error("degenerate triple: {0}")]
    DegenerateTriple(String),
    #[error("mismatched combinatorics: {0}")]
    MismatchedCombinatorics(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
}

impl Error {
    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::PrecisionTooLow(_) => "precision-too-low",
            Error::BracketInvalid => "bracket-invalid",
            Error::ContainsCriticalValue => "contains-critical-value",
            Error::RationalDetected { .. } => "rational-detected",
            Error::PrecisionExhausted(_) => "precision-exhausted",
            Error::TuningFailed(_) => "tuning-failed",
            Error::LevelTooShallow { .. } => "level-too-shallow",
            Error::CombinatoricsViolation(_) => "combinatorics-violation",
            Error::DegenerateQuadruple => "degenerate-quadruple",
            Error::ChainEntersFlat { .. } => "chain-enters-flat",
            Error::InPreimage { .. } => "in-preimage",
            Error::InFlat => "in-flat",
            Error::CodeInvalid(_) => "code-invalid",
            Error::NoSuchK { .. } => "no-such-k",
            Error::DegenerateTriple(_) => "degenerate-triple",
            Error::MismatchedCombinatorics(_) => "mismatched-combinatorics",
            Error::BudgetExceeded(_) => "budget-exceeded",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParameter(_)
                | Error::BracketInvalid
                | Error::CodeInvalid(_)
                | Error::DegenerateQuadruple
                | Error::DegenerateTriple(_)
                | Error::LevelTooShallow { .. }
                | Error::MismatchedCombinatorics(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
