use std::fmt;

use attnblend_core::caof::CaofError;
use attnblend_core::io::TensorIoError;
use attnblend_core::metrics::MetricsError;
use attnblend_core::ot::OtError;
use attnblend_core::sasf::SasfError;
use attnblend_core::select::SelectError;
use attnblend_core::synthetic::SyntheticError;
use attnblend_core::types::FeatureError;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// A failure reported as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            exit: EXIT_VALIDATION,
        }
    }

    pub fn numerical(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
            exit: EXIT_NUMERICAL,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.code, "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<TensorIoError> for CliError {
    fn from(e: TensorIoError) -> Self {
        let code = match &e {
            TensorIoError::Io { source, .. } => match source.kind() {
                std::io::ErrorKind::NotFound => "ENOENT",
                std::io::ErrorKind::PermissionDenied => "EACCES",
                _ => "EIO",
            },
            TensorIoError::MagicMismatch => "MAGIC_MISMATCH",
            TensorIoError::UnsupportedVersion { .. } => "UNSUPPORTED_VERSION",
            TensorIoError::UnsupportedDtype(_) => "UNSUPPORTED_DTYPE",
            TensorIoError::HeaderParse(_) => "HEADER_PARSE",
            TensorIoError::TruncatedPayload { .. } => "TRUNCATED_PAYLOAD",
            TensorIoError::TrailingData { .. } => "TRAILING_DATA",
            TensorIoError::NonFinite { .. } => "NON_FINITE",
            TensorIoError::ShapeDataMismatch { .. } => "SHAPE_MISMATCH",
            TensorIoError::MissingColumn(_) => "MISSING_COLUMN",
            TensorIoError::UnexpectedColumn(_) => "UNEXPECTED_COLUMN",
            TensorIoError::NonNumericCell { .. } => "NON_NUMERIC_CELL",
            TensorIoError::ValueOutOfRange { .. } => "VALUE_OUT_OF_RANGE",
            TensorIoError::DuplicateSampleId(_) => "DUPLICATE_SAMPLE_ID",
            TensorIoError::Csv(_) => "CSV",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        let code = match &e {
            SelectError::IndexOutOfRange { .. } => "TOKEN_OUT_OF_RANGE",
            SelectError::EmptyVector => "EMPTY_VECTOR",
            SelectError::LengthMismatch { .. } | SelectError::GridMismatch { .. } => "SHAPE_MISMATCH",
            SelectError::InvalidPercentile(_) => "INVALID_PERCENTILE",
            SelectError::EmptySelector => "EMPTY_SELECTOR",
            SelectError::InvalidStack(_) => "INVALID_STACK",
            SelectError::EmptySet(_) => "EMPTY_SET",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<OtError> for CliError {
    fn from(e: OtError) -> Self {
        match &e {
            OtError::NumericalOverflow { .. } => CliError::numerical("NUMERICAL_OVERFLOW", e.to_string()),
            OtError::ZeroRow(_) => CliError::numerical("ZERO_ROW", e.to_string()),
            OtError::InvalidParams(_) => CliError::validation("INVALID_PARAMETER", e.to_string()),
            OtError::NonFiniteCost { .. } => CliError::numerical("NON_FINITE_COST", e.to_string()),
            OtError::LengthMismatch { .. } | OtError::IndexOutOfRange { .. } | OtError::ShapeMismatch(_) => {
                CliError::validation("SHAPE_MISMATCH", e.to_string())
            }
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::validation("INVALID_FEATURES", e.to_string())
    }
}

impl From<CaofError> for CliError {
    fn from(e: CaofError) -> Self {
        match e {
            CaofError::ShapeMismatch(m) => CliError::validation("SHAPE_MISMATCH", m),
            CaofError::NonStochasticRow { .. } => CliError::numerical("NON_STOCHASTIC_PLAN", e.to_string()),
            CaofError::InvalidWeight(_) => CliError::validation("INVALID_PARAMETER", e.to_string()),
            CaofError::Select(e) => e.into(),
            CaofError::Transport(e) => e.into(),
            CaofError::Features(e) => e.into(),
        }
    }
}

impl From<SasfError> for CliError {
    fn from(e: SasfError) -> Self {
        let code = match &e {
            SasfError::ShapeMismatch(_) => "SHAPE_MISMATCH",
            SasfError::EmptyMatrix => "EMPTY_MATRIX",
            SasfError::KernelWiderThanSignal { .. } => "KERNEL_WIDER_THAN_SIGNAL",
            SasfError::InvalidKernel(_) | SasfError::InvalidAlpha(_) => "INVALID_PARAMETER",
            SasfError::Features(_) => "INVALID_FEATURES",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match &e {
            MetricsError::DegenerateRange(_) => "DEGENERATE_RANGE",
            MetricsError::OutsideRange { .. } => "OUTSIDE_RANGE",
            MetricsError::NonPositiveInput(_) => "NON_POSITIVE_INPUT",
            MetricsError::InvalidWeights(_) => "INVALID_WEIGHTS",
            MetricsError::InvalidNormalization(_) => "INVALID_NORMALIZATION",
            MetricsError::TooSmall { .. } => "IMAGE_TOO_SMALL",
            MetricsError::InvalidImage(_) => "INVALID_IMAGE",
            MetricsError::InvalidCutoff(_) => "INVALID_PARAMETER",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<SyntheticError> for CliError {
    fn from(e: SyntheticError) -> Self {
        CliError::validation("INVALID_SHAPE", e.to_string())
    }
}
