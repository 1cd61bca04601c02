use thiserror::Error;

/// Errors raised by the solvers, estimators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of a numerical routine (non-finite values,
    /// zero weights, invalid control parameters).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A root-finding bracket without a sign change.
    #[error("no sign change in bracket [{lo}, {hi}]: g(lo)={g_lo}, g(hi)={g_hi}")]
    Bracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    /// The quadratic program has an empty feasible region.
    #[error("quadratic program infeasible: {family} constraint {index} cannot be satisfied")]
    QpInfeasible { family: ConstraintFamily, index: usize },

    /// Balancing weights could not be found; carries the final imbalance.
    #[error("calibration infeasible ({reason}); final imbalance {imbalance:?}")]
    CalibrationInfeasible { reason: String, imbalance: Vec<f64> },

    #[error("missing target summary: {0}")]
    MissingSummary(&'static str),

    #[error("estimand needs both arms present: {0}")]
    MissingArm(String),

    #[error("singular regression fit: design matrix is rank deficient")]
    SingularFit,

    #[error("singular sandwich: balanced covariates are collinear")]
    SingularSandwich,

    #[error("estimating equations do not hold at the supplied solution: {0}")]
    EstimatingEquations(String),

    #[error("all {replicates} bootstrap replicates failed")]
    BootstrapFailed { replicates: usize },

    /// Malformed input file or configuration; `line` is 1-based when known.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Constraint groups of a quadratic program, used to report infeasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    Equality,
    NonNegativity,
    Box,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintFamily::Equality => "equality",
            ConstraintFamily::NonNegativity => "non-negativity",
            ConstraintFamily::Box => "box",
        })
    }
}

impl Error {
    pub(crate) fn parse(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = infeasible calibration, 3 = parse/config error, 4 = missing summary,
    /// 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CalibrationInfeasible { .. } | Error::QpInfeasible { .. } => 2,
            Error::Parse { .. } => 3,
            Error::MissingSummary(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
