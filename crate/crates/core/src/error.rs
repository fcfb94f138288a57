use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("no asymptotically stable equilibrium in the domain")]
    NoStableEquilibrium,

    #[error("tangent (sign-degenerate) root of the drift near x = {x}")]
    TangentRoot { x: f64 },

    #[error("shrunk basin is empty (basin {basin}, delta = {delta})")]
    EmptyShrunkBasin { basin: usize, delta: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}] (estimate {estimate}, error {error})")]
    QuadratureFailure {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("1D additivity violated: V[{i}][{k}] = {direct} but the sum through {j} is {summed}")]
    Additivity {
        i: usize,
        j: usize,
        k: usize,
        direct: f64,
        summed: f64,
    },

    #[error(
        "assumption A violated for cycle {cycle} at c = {c}: the minimal exit rate is not achieved for a single value of j (tied targets {tied:?}, 0-based)"
    )]
    AssumptionAViolation {
        cycle: String,
        tied: Vec<usize>,
        c: f64,
    },

    #[error("standing assumptions on the coefficients fail:\n{0}")]
    SystemAssumptions(String),

    #[error("hierarchy changes with c: {0}")]
    HierarchyUnstable(String),

    #[error("both candidate profiles are discontinuous at the merge level lambda = {lambda}")]
    BothDiscontinuousAtMerge { lambda: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("ordering violated: {0}")]
    OrderingViolation(String),

    #[error("genericity violated at lambda = {lambda}: {detail}")]
    GenericityViolation { lambda: f64, detail: String },

    #[error("cycle {cycle} never merges")]
    LambdaGammaUnbounded { cycle: String },

    #[error("sweep inconsistency at lambda = {lambda}: {detail}")]
    SweepInconsistency { lambda: f64, detail: String },

    #[error("time step collapsed below {dt_min} at t = {t}")]
    StepFailure { t: f64, dt_min: f64 },

    #[error("time budget exceeded: final time {t_final} needs more than {max_steps} steps")]
    BudgetExceeded { t_final: f64, max_steps: usize },

    #[error("ensemble statistics unstable: {0}")]
    StabilityFailure(String),

    #[error("root finding failed: {0}")]
    RootFailure(String),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Assumption,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Expr(_) | Error::Config(_) | Error::Io(_) => ErrorClass::Config,
            Error::NoStableEquilibrium
            | Error::TangentRoot { .. }
            | Error::EmptyShrunkBasin { .. }
            | Error::AssumptionAViolation { .. }
            | Error::SystemAssumptions(_)
            | Error::HierarchyUnstable(_)
            | Error::BothDiscontinuousAtMerge { .. }
            | Error::DegenerateData(_)
            | Error::OrderingViolation(_)
            | Error::GenericityViolation { .. }
            | Error::LambdaGammaUnbounded { .. } => ErrorClass::Assumption,
            Error::QuadratureFailure { .. }
            | Error::Additivity { .. }
            | Error::SweepInconsistency { .. }
            | Error::StepFailure { .. }
            | Error::BudgetExceeded { .. }
            | Error::StabilityFailure(_)
            | Error::RootFailure(_) => ErrorClass::Numeric,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
