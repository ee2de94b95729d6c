use thiserror::Error;

use otterlink_core::feed::IngestError;
use otterlink_core::{InteractionError, PairId, UserId};

use crate::protocol::{DecodeError, ErrorCode};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("sequence number {got} does not follow {last}")]
    BadSeq { last: u64, got: u64 },
    #[error("missing or invalid token")]
    Unauthorized,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("a pair needs two distinct users")]
    SelfPair,
    #[error("user {0} is already paired")]
    AlreadyPaired(UserId),
    #[error("user {0} is not paired")]
    NotPaired(UserId),
    #[error("unknown pair {0}")]
    UnknownPair(PairId),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("log record {seq} does not replay: {reason}")]
    Replay { seq: u64, reason: String },
}

impl ServiceError {
    pub fn code(&self) -> ErrorCode {
        use InteractionError as I;
        match self {
            ServiceError::Malformed(_) => ErrorCode::Malformed,
            ServiceError::UnknownType(_) => ErrorCode::UnknownType,
            ServiceError::UnsupportedVersion(_) => ErrorCode::UnsupportedVersion,
            ServiceError::BadSeq { .. } => ErrorCode::BadSeq,
            ServiceError::Unauthorized => ErrorCode::Unauthorized,
            ServiceError::UnknownUser(_) => ErrorCode::UnknownUser,
            ServiceError::SelfPair => ErrorCode::SelfPair,
            ServiceError::AlreadyPaired(_) => ErrorCode::AlreadyPaired,
            ServiceError::NotPaired(_) => ErrorCode::NotPaired,
            ServiceError::UnknownPair(_) => ErrorCode::UnknownPair,
            ServiceError::Interaction(e) => match e {
                I::NotInPair(_) => ErrorCode::NotPaired,
                I::StateNotAvailable(_) => ErrorCode::StateNotAvailable,
                I::UnknownMessage(_) => ErrorCode::UnknownMessage,
                I::AlreadyResolved { .. } => ErrorCode::AlreadyResolved,
                I::IllegalQuickReact(_) => ErrorCode::IllegalQuickReact,
                I::ReactToReact(_) => ErrorCode::ReactToReact,
                I::PhaseMismatch { .. } => ErrorCode::PhaseMismatch,
            },
            ServiceError::Ingest(IngestError::OutOfOrderEvent { .. }) => ErrorCode::OutOfOrderEvent,
            ServiceError::Ingest(IngestError::Invalid(_)) => ErrorCode::InvalidSample,
            ServiceError::Storage(_) | ServiceError::Replay { .. } => ErrorCode::Storage,
        }
    }
}

impl From<DecodeError> for ServiceError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::UnknownType(t) => ServiceError::UnknownType(t),
            DecodeError::Malformed(m) => ServiceError::Malformed(m),
        }
    }
}
