use thiserror::Error;

use crate::interface::dsl::DslError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("total dimension {0} exceeds the 2^20 limit")]
    DimensionOverflow(usize),

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer index {index} out of range for a circuit with {layers} layers")]
    LayerOutOfRange { index: usize, layers: usize },

    #[error("unknown detector `{0}`")]
    UnknownDetector(String),

    #[error("unknown segment `{0}`")]
    UnknownSegment(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    /// The weak value is undefined: pre- and post-selected states are orthogonal.
    #[error("postselection is orthogonal to the preselection (|<f|i>| = {overlap:.3e})")]
    OrthogonalPostselection { overlap: f64 },

    #[error("postselection never succeeds: every branch has zero overlap")]
    NoClick,

    #[error("scenario is not dark-port calibrated (dark amplitude {amplitude:.3e})")]
    NotDarkPort { amplitude: f64 },

    #[error("scenario lacks the nested-interferometer segments (D, B, C, E)")]
    NotNested,

    #[error("operator does not act on internal degrees of freedom only")]
    NotInternal,

    #[error(transparent)]
    Dsl(#[from] DslError),

    #[error("payload `{payload}` cannot be emitted as {format}")]
    UnsupportedFormat { payload: String, format: String },

    #[error("serialization failed: {0}")]
    Serialization(String),
}
