use thiserror::Error;

/// Error type for all fallible operations in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid must satisfy hi > lo and n >= 2 (got lo={lo}, hi={hi}, n={n})")]
    BadGrid { lo: f64, hi: f64, n: usize },

    #[error("grid [{lo}, {hi}] does not cover required support [{need_lo}, {need_hi}]")]
    Coverage {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("mixture weights sum to {0}, expected 1 within 1e-12")]
    WeightSum(f64),

    #[error("mixture arrays must have equal nonzero length")]
    MixtureShape,

    #[error("grid steps differ beyond tolerance: {0} vs {1}")]
    StepMismatch(f64, f64),

    #[error("operation would produce a grid of {0} points (limit {1})")]
    GridOverflow(usize, usize),

    #[error("density mass deficit {0} exceeds tolerance {1}; support is under-covered")]
    Truncation(f64, f64),

    #[error(
        "Fisher information estimate unstable: {fine} at full resolution vs {coarse} coarsened \
         (relative change {rel_change:.3e} > 1e-2); pre-smooth the density"
    )]
    FisherUnstable {
        fine: f64,
        coarse: f64,
        rel_change: f64,
    },

    #[error("joint distribution has an empty row/column marginal at index {0}")]
    DegenerateJoint(usize),

    #[error("lambda must be >= 1 (got {0})")]
    LambdaRange(f64),

    #[error("quantizer bin count {0} exceeds grid resolution {1}")]
    QuantizerResolution(usize, usize),

    #[error("conditional functional supports at most 2 components (got {0})")]
    TooManyComponents(usize),

    #[error("unknown suite name `{0}`")]
    UnknownSuite(String),

    #[error("density file: {0}")]
    DensityFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
