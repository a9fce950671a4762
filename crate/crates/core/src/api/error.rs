use serde::{Deserialize, Serialize};

use crate::corpus::StoreError;
use crate::effectiveness::{EffectivenessError, ModelError};
use crate::factors::UnknownFactor;
use crate::feature::{BundleError, ProfileError, RangeError};
use crate::recommend::RecommendError;
use crate::summary::SummaryError;

/// Machine-readable error code shared by the HTTP API and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    SchemaError,
    InvariantViolation,
    NotFound,
    RangeError,
    UndefinedFactor,
    UnknownFactor,
    NoFactorsSelected,
    EmptyCandidates,
    EmptyScript,
    EmptyCorpus,
    DegenerateData,
    SingularInformation,
    NoPoses,
    DuplicateId,
    InvalidId,
    InvalidArgument,
    ModelError,
    StorageError,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::SchemaError => "SchemaError",
            ErrorCode::InvariantViolation => "InvariantViolation",
            ErrorCode::NotFound => "NotFound",
            ErrorCode::RangeError => "RangeError",
            ErrorCode::UndefinedFactor => "UndefinedFactor",
            ErrorCode::UnknownFactor => "UnknownFactor",
            ErrorCode::NoFactorsSelected => "NoFactorsSelected",
            ErrorCode::EmptyCandidates => "EmptyCandidates",
            ErrorCode::EmptyScript => "EmptyScript",
            ErrorCode::EmptyCorpus => "EmptyCorpus",
            ErrorCode::DegenerateData => "DegenerateData",
            ErrorCode::SingularInformation => "SingularInformation",
            ErrorCode::NoPoses => "NoPoses",
            ErrorCode::DuplicateId => "DuplicateId",
            ErrorCode::InvalidId => "InvalidId",
            ErrorCode::InvalidArgument => "InvalidArgument",
            ErrorCode::ModelError => "ModelError",
            ErrorCode::StorageError => "StorageError",
            ErrorCode::Internal => "Internal",
        }
    }

    /// HTTP status the code is reported with.
    pub fn status(self) -> u16 {
        match self {
            ErrorCode::NotFound => 404,
            ErrorCode::DuplicateId => 409,
            ErrorCode::EmptyCandidates
            | ErrorCode::EmptyScript
            | ErrorCode::EmptyCorpus
            | ErrorCode::DegenerateData
            | ErrorCode::SingularInformation
            | ErrorCode::NoPoses => 422,
            ErrorCode::StorageError | ErrorCode::Internal => 500,
            _ => 400,
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status: code.status(),
            code,
            message: message.into(),
        }
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        ApiError::new(ErrorCode::NotFound, format!("{what} not found"))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::InvalidArgument, message)
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        let code = match e {
            BundleError::Schema { .. } => ErrorCode::SchemaError,
            BundleError::Invariant { .. } => ErrorCode::InvariantViolation,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<RangeError> for ApiError {
    fn from(e: RangeError) -> Self {
        ApiError::new(ErrorCode::RangeError, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::DuplicateId(_) => ErrorCode::DuplicateId,
            StoreError::NotFound(_) => ErrorCode::NotFound,
            StoreError::InvalidId(_) => ErrorCode::InvalidId,
            StoreError::Bundle(b) => return b.clone().into(),
            StoreError::Storage { .. } => ErrorCode::StorageError,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        let code = match &e {
            RecommendError::NotFound(_) => ErrorCode::NotFound,
            RecommendError::Range(r) => return r.clone().into(),
            RecommendError::EmptyCandidates => ErrorCode::EmptyCandidates,
            RecommendError::UndefinedFactor(_) => ErrorCode::UndefinedFactor,
            RecommendError::NoFactorsSelected => ErrorCode::NoFactorsSelected,
            RecommendError::EmptyScript => ErrorCode::EmptyScript,
            RecommendError::InvalidK => ErrorCode::InvalidArgument,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<EffectivenessError> for ApiError {
    fn from(e: EffectivenessError) -> Self {
        let code = match &e {
            EffectivenessError::DegenerateData(_) => ErrorCode::DegenerateData,
            EffectivenessError::EmptyCorpus => ErrorCode::EmptyCorpus,
            EffectivenessError::SingularInformation => ErrorCode::SingularInformation,
            EffectivenessError::InvalidArgument(_) => ErrorCode::InvalidArgument,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<SummaryError> for ApiError {
    fn from(e: SummaryError) -> Self {
        match e {
            SummaryError::NoPoses => ApiError::new(ErrorCode::NoPoses, e.to_string()),
            SummaryError::Range(r) => r.into(),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        ApiError::new(ErrorCode::ModelError, e.to_string())
    }
}

impl From<UnknownFactor> for ApiError {
    fn from(e: UnknownFactor) -> Self {
        ApiError::new(ErrorCode::UnknownFactor, e.to_string())
    }
}

impl From<ProfileError> for ApiError {
    fn from(e: ProfileError) -> Self {
        ApiError::new(ErrorCode::InvalidArgument, e.to_string())
    }
}
