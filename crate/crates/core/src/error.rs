use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on scheme parameters, sample sizes, or study settings
    /// was violated.
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// Full enumeration of the sequence space would exceed the cap.
    #[error("enumeration too large: {count} admissible sequences exceed the cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    /// Malformed data handed to an operation (length mismatches, bad values).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An assignment sequence left a treatment arm too small for the
    /// requested statistic.
    #[error("degenerate arm: {0}")]
    DegenerateArm(String),

    /// The model has no residual degrees of freedom.
    #[error("unidentifiable model: {0}")]
    UnidentifiableModel(String),
}
