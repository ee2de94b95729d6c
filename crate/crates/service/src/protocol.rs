//! Wire format: one JSON [`Envelope`] per line.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use otterlink_core::{MessageId, Mode, PairId, ReactKind, ReactVia, StateKind, TraceEvent, UserId};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub version: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default)]
    pub body: Value,
}

impl Envelope {
    pub fn new(kind: impl Into<String>, seq: u64, body: Value) -> Self {
        Envelope {
            version: PROTOCOL_VERSION,
            kind: kind.into(),
            seq,
            token: None,
            body,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("envelopes always serialize")
    }
}

/// Message `type` strings.
pub mod kinds {
    pub const REGISTER: &str = "register";
    pub const PAIR: &str = "pair";
    pub const GET_STATE_LIST: &str = "get_state_list";
    pub const SHARE_STATE: &str = "share_state";
    pub const VIEW_STATE: &str = "view_state";
    pub const SEND_REACT: &str = "send_react";
    pub const DONT_REACT: &str = "dont_react";
    pub const VIEW_REACT: &str = "view_react";
    pub const SENSOR_EVENT: &str = "sensor_event";
    pub const NOTIFICATION: &str = "notification";
    pub const ERROR: &str = "error";
    /// Server-internal records, only ever read back from the event log.
    pub const TICK: &str = "tick";
    pub const SET_MODE: &str = "set_mode";
}

/// Where a shared state was picked from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareOrigin {
    #[default]
    List,
    Notification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterBody {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tz_offset_mins: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairBody {
    pub partner: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareStateBody {
    pub state: StateKind,
    #[serde(default)]
    pub origin: ShareOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRef {
    pub message: MessageId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendReactBody {
    pub message: MessageId,
    pub react: ReactKind,
    pub via: ReactVia,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetModeBody {
    pub pair: PairId,
    pub mode: Mode,
}

/// A decoded client (or log) request.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Register(RegisterBody),
    Pair(PairBody),
    GetStateList,
    ShareState(ShareStateBody),
    ViewState(MessageRef),
    SendReact(SendReactBody),
    DontReact(MessageRef),
    ViewReact(MessageRef),
    SensorEvent(TraceEvent),
    Tick,
    SetMode(SetModeBody),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    UnknownType(String),
    Malformed(String),
}

fn body<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, DecodeError> {
    serde_json::from_value(v.clone()).map_err(|e| DecodeError::Malformed(e.to_string()))
}

impl Request {
    /// Decodes an envelope. Internal record types are only accepted when
    /// `internal` is set (log replay and admin paths).
    pub fn decode(env: &Envelope, internal: bool) -> Result<Request, DecodeError> {
        use kinds::*;
        let b = &env.body;
        Ok(match env.kind.as_str() {
            REGISTER => Request::Register(body(b)?),
            PAIR => Request::Pair(body(b)?),
            GET_STATE_LIST => Request::GetStateList,
            SHARE_STATE => Request::ShareState(body(b)?),
            VIEW_STATE => Request::ViewState(body(b)?),
            SEND_REACT => Request::SendReact(body(b)?),
            DONT_REACT => Request::DontReact(body(b)?),
            VIEW_REACT => Request::ViewReact(body(b)?),
            SENSOR_EVENT => Request::SensorEvent(body(b)?),
            TICK if internal => Request::Tick,
            SET_MODE if internal => Request::SetMode(body(b)?),
            other => return Err(DecodeError::UnknownType(other.to_owned())),
        })
    }

    pub fn kind(&self) -> &'static str {
        use kinds::*;
        match self {
            Request::Register(_) => REGISTER,
            Request::Pair(_) => PAIR,
            Request::GetStateList => GET_STATE_LIST,
            Request::ShareState(_) => SHARE_STATE,
            Request::ViewState(_) => VIEW_STATE,
            Request::SendReact(_) => SEND_REACT,
            Request::DontReact(_) => DONT_REACT,
            Request::ViewReact(_) => VIEW_REACT,
            Request::SensorEvent(_) => SENSOR_EVENT,
            Request::Tick => TICK,
            Request::SetMode(_) => SET_MODE,
        }
    }

    pub fn body(&self) -> Value {
        let v = match self {
            Request::Register(b) => serde_json::to_value(b),
            Request::Pair(b) => serde_json::to_value(b),
            Request::GetStateList | Request::Tick => return Value::Object(Default::default()),
            Request::ShareState(b) => serde_json::to_value(b),
            Request::ViewState(b) | Request::DontReact(b) | Request::ViewReact(b) => serde_json::to_value(b),
            Request::SendReact(b) => serde_json::to_value(b),
            Request::SensorEvent(b) => serde_json::to_value(b),
            Request::SetMode(b) => serde_json::to_value(b),
        };
        v.expect("request bodies always serialize")
    }

    /// Whether a successful application can change service state.
    pub fn mutates(&self) -> bool {
        !matches!(self, Request::ViewReact(_))
    }
}

/// Coded protocol errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Malformed,
    UnknownType,
    UnsupportedVersion,
    BadSeq,
    Unauthorized,
    UnknownUser,
    SelfPair,
    AlreadyPaired,
    NotPaired,
    UnknownPair,
    StateNotAvailable,
    UnknownMessage,
    AlreadyResolved,
    IllegalQuickReact,
    ReactToReact,
    PhaseMismatch,
    OutOfOrderEvent,
    InvalidSample,
    Storage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub reply_to: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}
