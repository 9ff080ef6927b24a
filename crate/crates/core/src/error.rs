use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the analysis library can report.
///
/// Each variant maps onto a stable machine-readable code via [`Error::code`],
/// which the command line surfaces in its reports and exit messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing landmark {name}{}", frame_suffix(*frame))]
    MissingLandmark { name: String, frame: Option<usize> },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid fit window [{start}, {end}] s for curve domain [0, {domain_end}] s")]
    InvalidWindow {
        start: f64,
        end: f64,
        domain_end: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("inconsistent triangle orientation at edge ({0}, {1})")]
    Orientation(usize, usize),

    #[error("plane at height {0} does not intersect the mesh")]
    EmptySection(f64),

    #[error("section at height {0} does not close into loops")]
    NonManifoldSection(f64),

    #[error("mesh is not closed; volume is undefined")]
    OpenMesh,

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(
        "moment {moment:.3} N·m at level {level_name} cannot be balanced by the muscles \
         (range supportable at that level alone [{min_supportable:.3}, {max_supportable:.3}] N·m; \
         levels sharing fascicles can also be jointly infeasible)"
    )]
    CapacityExceeded {
        level: usize,
        level_name: String,
        moment: f64,
        min_supportable: f64,
        max_supportable: f64,
        /// Maximum extensor moment each level can support.
        per_level_max: Vec<f64>,
    },

    #[error("tracking lost: no frame reached the score threshold {0}")]
    TrackingLost(f64),

    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn frame_suffix(frame: Option<usize>) -> String {
    match frame {
        Some(i) => format!(" in frame {i}"),
        None => String::new(),
    }
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "E_INVALID_SPEC",
            Error::InsufficientData { .. } => "E_INSUFFICIENT_DATA",
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::InvalidConfig(_) => "E_INVALID_CONFIG",
            Error::MissingLandmark { .. } => "E_MISSING_LANDMARK",
            Error::DegenerateGeometry(_) => "E_DEGENERATE_GEOMETRY",
            Error::DegenerateData(_) => "E_DEGENERATE_DATA",
            Error::InvalidWindow { .. } => "E_INVALID_WINDOW",
            Error::Parse { .. } => "E_PARSE",
            Error::Orientation(..) => "E_ORIENTATION",
            Error::EmptySection(_) => "E_EMPTY_SECTION",
            Error::NonManifoldSection(_) => "E_NON_MANIFOLD_SECTION",
            Error::OpenMesh => "E_OPEN_MESH",
            Error::MissingInput(_) => "E_MISSING_INPUT",
            Error::CapacityExceeded { .. } => "E_CAPACITY_EXCEEDED",
            Error::TrackingLost(_) => "E_TRACKING_LOST",
            Error::DegenerateDesign(_) => "E_DEGENERATE_DESIGN",
            Error::Io { .. } => "E_IO",
        }
    }

    /// Attach a frame index to a landmark error raised while processing a sequence.
    pub fn at_frame(self, index: usize) -> Self {
        match self {
            Error::MissingLandmark { name, frame: None } => Error::MissingLandmark {
                name,
                frame: Some(index),
            },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
