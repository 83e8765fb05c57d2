use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("missing required field `{0}`")]
    MissingField(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scheduling point {p:?} outside domain{}", fmt_step(.step))]
    Domain { p: Vec<f64>, step: Option<usize> },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// `I - A(p) Ts/2` is (numerically) singular.
    #[error(
        "det(I - A*Ts/2) = {det:e} is below the singularity threshold (Ts = {ts}, A = {a:?}){}{}",
        fmt_step(.step),
        fmt_point(.p)
    )]
    Wellposedness {
        a: Vec<Vec<f64>>,
        ts: f64,
        det: f64,
        step: Option<usize>,
        p: Option<Vec<f64>>,
    },

    #[error("singular resolvent at omega = {omega} rad/s")]
    SingularResolvent { omega: f64 },

    #[error("frequency {omega} rad/s is at or above Nyquist (omega*Ts = {angle} >= pi)")]
    Nyquist { omega: f64, angle: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid signal spec: {0}")]
    Signal(String),

    #[error("I/O error: {0}")]
    Io(String),
}

fn fmt_step(step: &Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step k = {k}"),
        None => String::new(),
    }
}

fn fmt_point(p: &Option<Vec<f64>>) -> String {
    match p {
        Some(p) => format!(", p = {p:?}"),
        None => String::new(),
    }
}

impl Error {
    /// Machine-greppable error code printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::MissingField(_) | Error::Signal(_) | Error::Config(_) => {
                "E_PARSE"
            }
            Error::Dimension(_) => "E_DIM",
            Error::Domain { .. }
            | Error::InvalidDomain(_)
            | Error::Nyquist { .. }
            | Error::SingularResolvent { .. } => "E_DOMAIN",
            Error::Wellposedness { .. } => "E_WELLPOSED",
            Error::Io(_) => "E_IO",
        }
    }

    /// Attach the simulation step and scheduling point to a step-local error.
    pub(crate) fn at_step(self, k: usize, point: &[f64]) -> Self {
        match self {
            Error::Wellposedness { a, ts, det, .. } => Error::Wellposedness {
                a,
                ts,
                det,
                step: Some(k),
                p: Some(point.to_vec()),
            },
            Error::Domain { p, .. } => Error::Domain { p, step: Some(k) },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
