//! The simulation event log: one JSON record per line, header first.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use otterlink_core::{
    MessageId, Mode, Notification, NotifierConfig, OtterMessage, PairId, ReactKind, SensingConfig, StateKind,
    StateList, Timestamp, TraceEvent, TzOffset, UserId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogUser {
    pub id: UserId,
    pub name: String,
    pub tz: TzOffset,
}

/// Run parameters. The verifier re-derives its expectations from these and
/// the raw sensor records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub seed: u64,
    pub mode: Mode,
    pub start: Timestamp,
    pub horizon_mins: i64,
    pub pair: PairId,
    pub users: Vec<LogUser>,
    pub sensing: SensingConfig,
    pub notifier: NotifierConfig,
    pub drop_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Sensor {
        user: UserId,
        input: TraceEvent,
    },
    ListServed {
        user: UserId,
        list: StateList,
    },
    StateShared {
        message: OtterMessage,
    },
    ReactSent {
        message: OtterMessage,
    },
    Viewed {
        user: UserId,
        message: MessageId,
    },
    Dismissed {
        user: UserId,
        message: MessageId,
    },
    ReactViewed {
        user: UserId,
        message: MessageId,
        react: ReactKind,
        state: StateKind,
    },
    Notified {
        notification: Notification,
    },
    /// A notification the drop injector kept from its recipient.
    Dropped {
        notification: Notification,
    },
    SuggestionDismissed {
        user: UserId,
        state: StateKind,
    },
    ModeChanged {
        pair: PairId,
        mode: Mode,
        from_window: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub at: Timestamp,
    #[serde(flatten)]
    pub record: Record,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub entries: Vec<Entry>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl EventLog {
    pub fn push(&mut self, at: Timestamp, record: Record) {
        self.entries.push(Entry { at, record });
    }

    pub fn header(&self) -> Option<&Header> {
        match self.entries.first().map(|e| &e.record) {
            Some(Record::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EventLog, LogError> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
            entries.push(e);
        }
        Ok(EventLog { entries })
    }

    /// Entries of one kind, with their indices.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Entry)> {
        self.entries.iter().enumerate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use otterlink_core::{MessageBody, Provenance};

    #[test]
    fn records_read_back() {
        let mut log = EventLog::default();
        log.push(
            Timestamp(60),
            Record::Sensor {
                user: UserId(1),
                input: TraceEvent::hr(Timestamp(60), 71.3),
            },
        );
        log.push(
            Timestamp(120),
            Record::StateShared {
                message: OtterMessage {
                    id: MessageId(4),
                    pair: PairId(1),
                    sender: UserId(2),
                    body: MessageBody::StateShare {
                        state: StateKind::Calm,
                        window_id: 0,
                    },
                    sent_at: Timestamp(120),
                    provenance: Provenance::RandomList,
                },
            },
        );
        let bytes = log.to_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(
            text.starts_with(
                r#"{"at":60,"event":"sensor","user":1,"input":{"t":60,"kind":"hr","payload":{"bpm":71.3}}}"#
            ),
            "{text}"
        );
        assert_eq!(EventLog::read_jsonl(&bytes[..]).unwrap(), log);
    }
}
