//! Append-only `events.log` plus `snapshot.json`.
//!
//! Each log line is one JSON [`LogRecord`]. A snapshot stores the full state
//! and the sequence number of the last record folded into it; restoring loads
//! the snapshot and replays the records after it.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use otterlink_core::Timestamp;

use crate::protocol::Envelope;

pub const LOG_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<S> {
    /// Sequence number of the last log record reflected in `state`.
    pub seq: u64,
    pub state: S,
}

/// The log ended in (or contained) an unreadable record and was truncated.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt event log: kept {kept} records, dropped {dropped_bytes} bytes from offset {offset}")]
pub struct CorruptLog {
    pub kept: usize,
    pub offset: u64,
    pub dropped_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub records: Vec<LogRecord>,
    pub corrupt: Option<CorruptLog>,
}

pub struct EventStore {
    dir: PathBuf,
    log: BufWriter<File>,
    fsync: bool,
}

impl EventStore {
    /// Opens `dir`, creating it if needed. Recovers and truncates the log
    /// before opening it for appends.
    pub fn open(dir: impl AsRef<Path>, fsync: bool) -> io::Result<(Self, Recovered)> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let recovered = recover_log(&dir.join(LOG_FILE))?;
        let file = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
        Ok((
            EventStore {
                dir,
                log: BufWriter::new(file),
                fsync,
            },
            recovered,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.flush()?;
        if self.fsync {
            self.log.get_ref().sync_data()?;
        }
        Ok(())
    }

    /// Atomically replaces the snapshot (write to a temp file, then rename).
    pub fn write_snapshot<S: Serialize>(&self, snapshot: &Snapshot<S>) -> io::Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(snapshot).map_err(io::Error::other)?;
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.dir.join(SNAPSHOT_FILE))
    }

    pub fn read_snapshot<S: DeserializeOwned>(&self) -> io::Result<Option<Snapshot<S>>> {
        read_snapshot(&self.dir)
    }
}

pub fn read_snapshot<S: DeserializeOwned>(dir: &Path) -> io::Result<Option<Snapshot<S>>> {
    match fs::read(dir.join(SNAPSHOT_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reads every intact record. The first unreadable or unterminated line and
/// everything after it is cut off the file.
pub fn recover_log(path: &Path) -> io::Result<Recovered> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Ok(Recovered {
                records: Vec::new(),
                corrupt: None,
            })
        }
        Err(e) => return Err(e),
    };
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut last_seq = None;
    while offset < bytes.len() {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let parsed = serde_json::from_slice::<LogRecord>(&bytes[offset..offset + len])
            .ok()
            .filter(|r| last_seq.is_none_or(|s| r.seq > s));
        let Some(record) = parsed else {
            break;
        };
        last_seq = Some(record.seq);
        records.push(record);
        offset += len + 1;
    }
    let corrupt = if offset < bytes.len() {
        let report = CorruptLog {
            kept: records.len(),
            offset: offset as u64,
            dropped_bytes: (bytes.len() - offset) as u64,
        };
        log::warn!("{report}");
        OpenOptions::new().write(true).open(path)?.set_len(offset as u64)?;
        Some(report)
    } else {
        None
    };
    Ok(Recovered { records, corrupt })
}
