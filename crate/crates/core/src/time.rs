//! Second-resolution UTC instants and the calendar arithmetic built on them.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

pub const SECS_PER_MIN: i64 = 60;
pub const SECS_PER_DAY: i64 = 86_400;
pub const MINS_PER_DAY: u32 = 1_440;
/// Length of one state-list window.
pub const WINDOW_SECS: i64 = 600;

/// A UTC instant, in whole seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    pub const fn plus_mins(self, mins: i64) -> Self {
        Timestamp(self.0 + mins * SECS_PER_MIN)
    }

    /// Index of the 10-minute window containing this instant.
    pub fn window_id(self) -> i64 {
        self.0.div_euclid(WINDOW_SECS)
    }

    fn local_secs(self, tz: TzOffset) -> i64 {
        self.0 + i64::from(tz.0) * SECS_PER_MIN
    }

    /// Minute of the local day, in `0..1440`.
    pub fn local_minute_of_day(self, tz: TzOffset) -> u32 {
        (self.local_secs(tz).rem_euclid(SECS_PER_DAY) / SECS_PER_MIN) as u32
    }

    /// Local calendar day, as days since 1970-01-01.
    pub fn local_day(self, tz: TzOffset) -> i64 {
        self.local_secs(tz).div_euclid(SECS_PER_DAY)
    }

    /// The UTC instant at which local `day` begins, plus `minute` minutes.
    pub fn from_local(day: i64, minute: u32, tz: TzOffset) -> Self {
        Timestamp(day * SECS_PER_DAY + i64::from(minute) * SECS_PER_MIN - i64::from(tz.0) * SECS_PER_MIN)
    }
}

/// Start instant of a window.
pub fn window_start(window_id: i64) -> Timestamp {
    Timestamp(window_id * WINDOW_SECS)
}

/// `floor(unix_seconds / 600)`.
pub fn window_id(now: Timestamp) -> i64 {
    now.window_id()
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;

    fn add(self, secs: i64) -> Timestamp {
        Timestamp(self.0 + secs)
    }
}

impl Sub for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let day = self.0.div_euclid(SECS_PER_DAY);
        let rem = self.0.rem_euclid(SECS_PER_DAY);
        write!(f, "d{}+{:02}:{:02}:{:02}", day, rem / 3600, (rem / 60) % 60, rem % 60)
    }
}

/// Offset of a user's local clock from UTC, in minutes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TzOffset(pub i32);

/// A half-open interval of local minutes-of-day. `start > end` wraps midnight.
/// Serialized as `"HH:MM-HH:MM"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DailySpan {
    pub start: u32,
    pub end: u32,
}

impl DailySpan {
    pub const fn hours(start_h: u32, end_h: u32) -> Self {
        DailySpan {
            start: start_h * 60,
            end: end_h * 60,
        }
    }

    pub fn contains(&self, minute: u32) -> bool {
        if self.start <= self.end {
            self.start <= minute && minute < self.end
        } else {
            minute >= self.start || minute < self.end
        }
    }
}

impl fmt::Display for DailySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}-{:02}:{:02}",
            self.start / 60,
            self.start % 60,
            self.end / 60,
            self.end % 60
        )
    }
}

impl TryFrom<String> for DailySpan {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DailySpan> for String {
    fn from(span: DailySpan) -> Self {
        span.to_string()
    }
}

impl std::str::FromStr for DailySpan {
    type Err = String;

    /// Parses `HH:MM-HH:MM`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |hm: &str| -> Result<u32, String> {
            let (h, m) = hm
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("expected HH:MM, got {hm:?}"))?;
            let h: u32 = h.parse().map_err(|_| format!("bad hour in {hm:?}"))?;
            let m: u32 = m.parse().map_err(|_| format!("bad minute in {hm:?}"))?;
            if h > 24 || m > 59 || (h == 24 && m > 0) {
                return Err(format!("time out of range: {hm:?}"));
            }
            Ok(h * 60 + m)
        };
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("expected HH:MM-HH:MM, got {s:?}"))?;
        Ok(DailySpan {
            start: parse(a)?,
            end: parse(b)?,
        })
    }
}
