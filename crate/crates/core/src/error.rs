use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no boundary of 0-chains")]
    BoundaryOfZeroChain,

    #[error("top-degree cochain has no differential")]
    TopDegreeCochain,

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("cell {cell} has dimension {found}, expected {expected}")]
    WrongCellDimension {
        cell: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("matrix is not skew-symmetric")]
    NotSkew,

    #[error("matrix is not a rotation (orthogonality defect {0:e})")]
    NotRotation(f64),

    #[error("cut locus: half-turn rotation")]
    CutLocus,

    #[error("near cut locus: |v| = {0} too close to pi")]
    NearCutLocus(f64),

    #[error("missing configuration at vertex {0}")]
    MissingVertex(String),

    #[error("fiber point does not match descriptor: {0}")]
    FiberMismatch(String),

    #[error("Legendre not regular here")]
    LegendreNotRegular,

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("solve failed at vertex {vertex}: {source}")]
    AtVertex {
        vertex: String,
        #[source]
        source: Box<Error>,
    },

    #[error("points too spread for a well-posed Karcher mean")]
    PointsTooSpread,

    #[error("Karcher iteration did not converge (update norm {0:e})")]
    KarcherNotConverged(f64),

    #[error("nodes not in general position")]
    NodesDegenerate,

    #[error("unsupported quadrature node: {0}")]
    UnsupportedNode(String),

    #[error("configuration not suited for geodesic interpolation: {0}")]
    Unsuited(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Wrap an error with the vertex at which it happened.
    pub fn at_vertex(vertex: impl std::fmt::Debug, err: Error) -> Error {
        Error::AtVertex {
            vertex: format!("{vertex:?}"),
            source: Box::new(err),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
