use std::path::PathBuf;

/// Every failure the toolkit can report. Variants are grouped by the
/// subsystem that raises them; the CLI maps them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("point or mesh outside grid bounds: {0}")]
    OutOfBounds(String),
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("database is empty")]
    EmptyDatabase,
    #[error("calibration label {0} is absent from the database")]
    LabelMismatch(String),
    #[error("simulation diverged: {0}")]
    SimDiverged(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoiseSpec(String),
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("ICP diverged after {iterations} iterations (residual {residual:.3e})")]
    IcpDiverged { iterations: usize, residual: f64 },
    #[error("degenerate rest shape: {0}")]
    DegenerateRestShape(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("degenerate task: {0}")]
    DegenerateTask(String),
    #[error("optimization stalled: {0}")]
    OptimizationStalled(String),
    #[error("signal too short: {len} samples, kernel needs {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("recognized category {found} but expected {expected}")]
    CategoryMismatch { expected: String, found: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable name used in run reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMesh(_) => "InvalidMesh",
            Error::InvalidContour(_) => "InvalidContour",
            Error::Parse { .. } => "ParseError",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::NotWatertight(_) => "NotWatertight",
            Error::Domain(_) => "DomainError",
            Error::EmptyDatabase => "EmptyDatabase",
            Error::LabelMismatch(_) => "LabelMismatch",
            Error::SimDiverged(_) => "SimDiverged",
            Error::InvalidNoiseSpec(_) => "InvalidNoiseSpec",
            Error::DegenerateMesh(_) => "DegenerateMesh",
            Error::IcpDiverged { .. } => "IcpDiverged",
            Error::DegenerateRestShape(_) => "DegenerateRestShape",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::CalibrationFailed(_) => "CalibrationFailed",
            Error::DegenerateTask(_) => "DegenerateTask",
            Error::OptimizationStalled(_) => "OptimizationStalled",
            Error::SignalTooShort { .. } => "SignalTooShort",
            Error::CategoryMismatch { .. } => "CategoryMismatch",
            Error::Validation(_) => "ValidationError",
            Error::NoData(_) => "NoData",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
