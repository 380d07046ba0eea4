use std::path::PathBuf;

/// Errors raised by surface construction, the metric, the generators, the
/// Moser pipeline and the command layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate immersion in patch {patch} at sample ({i}, {j}): |f_u x f_v| = {cross:e}")]
    DegenerateImmersion {
        patch: usize,
        i: usize,
        j: usize,
        cross: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid patch: {0}")]
    InvalidPatch(String),

    #[error("seam {seam} does not close up: deviation {deviation:e} exceeds {tolerance:e}")]
    SeamMismatch {
        seam: u32,
        deviation: f64,
        tolerance: f64,
    },

    #[error("reparametrization leaves the domain of patch {patch} by {excess:e}")]
    OutOfDomain { patch: usize, excess: f64 },

    #[error("matrix is not a proper rotation: {0}")]
    NotARotation(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("target discs overlap or violate clearance: {0}")]
    Overlap(String),

    #[error("invalid twist profile: {0}")]
    ProfileInvalid(String),

    #[error("no collision-free tube for disc {disc}: {reason}")]
    RoutingFailed { disc: usize, reason: String },

    #[error("non-positive Jacobian determinant {det:e} at node {node}")]
    NonPositiveJacobian { node: usize, det: f64 },

    #[error("incompatible Neumann data: integral {integral:e} exceeds tolerance {tolerance:e}")]
    IncompatibleData { integral: f64, tolerance: f64 },

    #[error("linear solver failed: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: usize },

    #[error("interpolated density is not positive (min {min:e})")]
    DegenerateInterpolation { min: f64 },

    #[error("flow step unstable: node {node} left the domain by {excess:e}")]
    StepUnstable { node: usize, excess: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("surface is not closed: {0}")]
    NotClosed(String),

    #[error("surface is not strictly convex: {0}")]
    NotConvex(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid spec: {0}")]
    SpecInvalid(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
