use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("mesh is not watertight: {count} boundary or non-manifold edges (first: {sample:?})")]
    NotWatertight {
        count: usize,
        sample: Vec<(u32, u32)>,
    },

    #[error("mesh self-intersects: {count} intersecting triangle pairs")]
    SelfIntersecting { count: usize },

    #[error("voxel grid would hold {requested} cells, above the cap of {cap}; use a larger voxel size (at least {suggested:.4} mm)")]
    TooManyVoxels {
        requested: u64,
        cap: u64,
        suggested: f64,
    },

    #[error("insufficient interior volume: no voxel lies {clearance} mm or more from the surface")]
    InsufficientInterior { clearance: f64 },

    #[error("point geometry: {0}")]
    PointGeometry(String),

    #[error("unroutable interior: points {points:?} fall in different graph components {components:?}")]
    Unroutable {
        points: Vec<String>,
        components: Vec<usize>,
    },

    #[error("no path between vertices {0} and {1}")]
    NoPath(usize, usize),

    #[error("routing retries exhausted after {retries} attempts; shortest achievable legs (mm): {best_lengths:?}")]
    RetriesExhausted {
        retries: usize,
        best_lengths: Vec<f64>,
    },

    #[error("unfillable conduit: diameter {diameter} mm is below the required {required} mm")]
    Unfillable { diameter: f64, required: f64 },

    #[error("conduit too short for target resistance {target:.0} ohm; max achievable {max:.0} ohm")]
    TargetTooHigh { target: f64, max: f64 },

    #[error("target resistance {target:.0} ohm is below the minimum achievable {min:.0} ohm")]
    TargetTooLow { target: f64, min: f64 },

    #[error("no feasible grid cell: {0}")]
    NoFeasibleCell(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("selection: {0}")]
    Selection(String),

    #[error("snr: {0}")]
    Snr(String),

    #[error("export: {0}")]
    Export(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage {stage} failed: {source}; hint: {hint}")]
    Stage {
        stage: String,
        hint: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable tag of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Invalid(_) => "invalid",
            Error::NotWatertight { .. } => "not-watertight",
            Error::SelfIntersecting { .. } => "self-intersecting",
            Error::TooManyVoxels { .. } => "too-many-voxels",
            Error::InsufficientInterior { .. } => "insufficient-interior",
            Error::PointGeometry(_) => "point-geometry",
            Error::Unroutable { .. } => "unroutable",
            Error::NoPath(..) => "no-path",
            Error::RetriesExhausted { .. } => "retries-exhausted",
            Error::Unfillable { .. } => "unfillable",
            Error::TargetTooHigh { .. } => "target-too-high",
            Error::TargetTooLow { .. } => "target-too-low",
            Error::NoFeasibleCell(_) => "no-feasible-cell",
            Error::Infeasible(_) => "infeasible",
            Error::Selection(_) => "selection",
            Error::Snr(_) => "snr",
            Error::Export(_) => "export",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Stage { source, .. } => source.kind(),
        }
    }

    /// Stage name and hint when the error came out of a pipeline stage.
    pub fn stage(&self) -> Option<(&str, &str)> {
        match self {
            Error::Stage { stage, hint, .. } => Some((stage, hint)),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
