use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown manifold `{0}` (expected `ground` or `excited`)")]
    UnknownManifold(String),

    #[error("matrix is not symmetric (max |H - H^T| = {0:.3e})")]
    NotHermitian(f64),

    #[error("eigensystems were built at different fields ({ground} T vs {excited} T)")]
    FieldMismatch { ground: f64, excited: f64 },

    #[error("non-finite OBE state at v = {velocity} m/s, detuning = {detuning} MHz, t = {time:.3e} s")]
    NonFinite { velocity: f64, detuning: f64, time: f64 },

    #[error("OBE invariant violated at v = {velocity} m/s, detuning = {detuning} MHz: {what}")]
    InvariantViolated { velocity: f64, detuning: f64, what: String },

    #[error("integration needs {steps} steps, above the limit of {limit}")]
    StepOverflow { steps: u64, limit: u64 },

    #[error("peak fit did not converge after {iterations} iterations (last iterate {last:?})")]
    FitNoConvergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("under-constrained field inversion: {0} usable peak(s), need at least 2")]
    UnderConstrained(usize),

    #[error("minimum of the loss sits at the bound {field} T of [{low}, {high}] T; the bracket does not contain the field")]
    BracketFailure { field: f64, low: f64, high: f64 },

    #[error("minimizer did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("{failed} of {total} Monte Carlo trials failed (limit 5%)")]
    TooManyTrialFailures { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps the error with a location or grid-point annotation.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 usage/config, 2 computation, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidArgument(_) | Error::UnknownManifold(_) | Error::Config(_) | Error::Parse { .. } => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }

    /// Short stable tag used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnknownManifold(_) => "unknown_manifold",
            Error::NotHermitian(_) => "not_hermitian",
            Error::FieldMismatch { .. } => "field_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::InvariantViolated { .. } => "invariant_violated",
            Error::StepOverflow { .. } => "step_overflow",
            Error::FitNoConvergence { .. } => "fit_no_convergence",
            Error::DegenerateWindow(_) => "degenerate_window",
            Error::UnderConstrained(_) => "under_constrained",
            Error::BracketFailure { .. } => "bracket_failure",
            Error::NoConvergence(_) => "no_convergence",
            Error::TooManyTrialFailures { .. } => "too_many_trial_failures",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Context { .. } => unreachable!(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::Parse {
                path: String::from("<csv>"),
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}
