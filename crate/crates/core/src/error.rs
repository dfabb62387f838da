use thiserror::Error;

/// Every failure surfaced by the library.
///
/// Variants carry enough context to locate the offending input; [`Error::code`]
/// gives a stable machine-readable tag used by the command-line front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight at index {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("kernel must be square with side {expected}, got {rows}x{cols}")]
    NonSquareKernel { expected: usize, rows: usize, cols: usize },
    #[error("kernel shape {rows}x{cols} does not match weights {expected_rows}x{expected_cols}")]
    KernelShape { expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("kernel entry at ({row}, {col}) is negative ({value})")]
    NegativeKernelEntry { row: usize, col: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("scale factor must be nonnegative, got {0}")]
    NegativeScale(f64),
    #[error("kernel argument must be nonnegative, got {0}")]
    NegativeArgument(f64),
    #[error("value is not finite: {0}")]
    NonFinite(f64),
    #[error("cone angle must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("problem size {size} exceeds cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },
    #[error("memory budget of {budget} bytes cannot hold the factored tensor ({needed} bytes)")]
    BudgetTooSmallForEitherPath { budget: usize, needed: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("squared distance {0} is negative beyond the clamp tolerance")]
    NegativeSquaredDistance(f64),
    #[error("every distortion slice vanishes; no mass can be matched")]
    AllMassForcedZero,
    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },
    #[error("problem size {size} exceeds exact solver cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("could not place squares without overlap after {attempts} attempts")]
    PlacementFailure { attempts: usize },
    #[error("sampled pixels carry no intensity")]
    InsufficientMass,
    #[error("correspondence is empty")]
    EmptyCorrespondence,
    #[error("degenerate train/test split: {0}")]
    DegenerateSplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Short snake_case identifier of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeWeight { .. } => "negative_weight",
            Error::NonSquareKernel { .. } => "non_square_kernel",
            Error::KernelShape { .. } => "kernel_shape",
            Error::NonFiniteEntry { .. } => "non_finite_entry",
            Error::NegativeKernelEntry { .. } => "negative_kernel_entry",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NegativeScale(_) => "negative_scale",
            Error::NegativeArgument(_) => "negative_argument",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidDelta(_) => "invalid_delta",
            Error::SizeCapExceeded { .. } => "size_cap_exceeded",
            Error::BudgetTooSmallForEitherPath { .. } => "budget_too_small",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NegativeSquaredDistance(_) => "negative_squared_distance",
            Error::AllMassForcedZero => "all_mass_forced_zero",
            Error::MassMismatch { .. } => "mass_mismatch",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::PlacementFailure { .. } => "placement_failure",
            Error::InsufficientMass => "insufficient_mass",
            Error::EmptyCorrespondence => "empty_correspondence",
            Error::DegenerateSplit(_) => "degenerate_split",
            Error::InvalidConfig(_) => "invalid_config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
