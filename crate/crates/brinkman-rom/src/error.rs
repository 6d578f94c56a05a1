use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix in {context}: {detail}")]
    SingularMatrix { context: String, detail: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    EigNoConvergence { iterations: usize, residual: f64 },

    #[error("linear program infeasible: largest constraint violation {violation:.3e}")]
    LpInfeasible { violation: f64 },

    #[error("parameter component {index} = {value:.6e} lies outside its interval [{lo:.6e}, {hi:.6e}]")]
    OutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid mesh configuration: {0}")]
    InvalidMesh(String),

    #[error("missing ANOVA subterm for direction {0:?}; term recursion sequenced incorrectly")]
    MissingSubterm(Vec<usize>),

    #[error("residual quadratic form is negative beyond rounding tolerance ({value:.3e} against scale {scale:.3e}); offline data corrupted")]
    NegativeQuadraticForm { value: f64, scale: f64 },

    #[error("offline residual data would need {required} bytes, above the configured cap of {cap} bytes")]
    OfflineMemoryCap { required: u64, cap: u64 },

    #[error("greedy training stagnated: {0}")]
    GreedyStagnation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported {what} format version {got} (expected {expected})")]
    FormatVersion {
        what: String,
        got: u32,
        expected: u32,
    },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn in_phase(phase: &str) -> impl FnOnce(Error) -> Error + '_ {
        move |source| Error::Phase {
            phase: phase.to_string(),
            source: Box::new(source),
        }
    }

    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
