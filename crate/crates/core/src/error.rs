use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor shape mismatch: (d={0}, D={1}) vs (d={2}, D={3})")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("tensor exponential needs a zero constant term, got {0}")]
    NonzeroConstant(f64),

    #[error("segment time increment must be positive, got {0}")]
    NonPositiveTimeStep(f64),

    #[error("letter {letter} is outside the alphabet {{0..={dim}}}")]
    InvalidLetter { letter: u8, dim: usize },

    #[error("interval [{start}, {end}] is not aligned with the path knots")]
    UnalignedInterval { start: f64, end: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("BCH dual generator needs an even strength, got {0}; extend an even-strength array instead")]
    OddStrength(usize),

    #[error("refusing to expand a generator with {0} rows (limit {limit})", limit = crate::oa::MAX_GENERATOR_ROWS)]
    GeneratorTooLarge(usize),

    #[error("no implemented binary array family reaches {cols} columns at strength {strength} (needs GF(2^n) with n > 32)")]
    FieldTooLarge { cols: usize, strength: usize },

    #[error("polynomial {0:#x} is not irreducible over GF(2)")]
    NotIrreducible(u64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("invalid parameter for {model}: {constraint}")]
    InvalidParameter { model: String, constraint: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge (achieved tolerance {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("non-finite state on segment {segment}")]
    NonFinite { segment: usize },

    #[error("{generator} supports at most {max} dimensions, requested {requested}")]
    DimensionBudget {
        generator: &'static str,
        max: usize,
        requested: usize,
    },

    #[error("{stage} stage failed after {attempts} attempt(s); best residual {residual:e}")]
    StageFailed {
        stage: &'static str,
        residual: f64,
        attempts: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
