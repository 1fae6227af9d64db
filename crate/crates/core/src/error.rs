use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// The fractal description is malformed or violates a structural
    /// hypothesis (bad glue pairs, disconnected cell graph, ...).
    #[error("invalid fractal spec: {0}")]
    InvalidSpec(String),

    /// A vertex address could not be parsed or refers to letters outside
    /// the alphabet of the fractal.
    #[error("invalid vertex address: {0}")]
    InvalidVertex(String),

    /// The harmonic structure has a zero extension eigenvalue or an
    /// incomplete eigenvector system; derivative operations are undefined.
    #[error("degenerate harmonic structure: {0}")]
    DegenerateStructure(String),

    /// The extension matrix has a genuinely complex eigenvalue pair.
    #[error("complex spectrum: {0}")]
    ComplexSpectrum(String),

    /// The three equivalent symmetry conditions disagree beyond tolerance,
    /// which indicates an inconsistent harmonic structure.
    #[error("equivalence violation: {0}")]
    EquivalenceViolation(String),

    /// A renormalization problem has no positive root.
    #[error("no positive root: {0}")]
    NoPositiveRoot(String),

    /// The traced level-1 energy is not proportional to the level-0 energy.
    #[error("proportionality failure: {0}")]
    ProportionalityFailure(String),

    /// A fixed vector (invariant measure weights, Gram matrix) is not
    /// unique up to scale.
    #[error("non-unique fixed vector: {0}")]
    NonUniqueFixedVector(String),

    /// A linear system was singular where a unique solution was required.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge: {0}")]
    SolverDiverged(String),

    /// Grid functions at incompatible levels were combined.
    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    /// The requested computation cannot be carried out exactly.
    #[error("not representable in rational mode: {0}")]
    RationalUnsupported(String),

    /// An operation's precondition does not hold for the given data.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A geometric tail series does not converge and its coefficient does
    /// not vanish, so the derivative series has no value.
    #[error("divergent tail: {0}")]
    DivergentTail(String),

    /// A function is not differentiable at the requested vertex, so no
    /// weak tangent exists there.
    #[error("not differentiable: {0}")]
    NotDifferentiable(String),

    /// File or stream I/O failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file (spec TOML, CSV) was syntactically invalid.
    #[error("parse error: {0}")]
    Parse(String),
}
