//! Time-tag streams and their columnar text format.
//!
//! A stream file holds one detection time per line as an integer number of
//! picoseconds, preceded by `#`-prefixed header lines:
//!
//! ```text
//! # channel: idler
//! # duration_s: 60
//! # seed: 7
//! 1043
//! 88213
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{non_negative, Error, Result};

const PS_PER_S: f64 = 1e12;

/// Sorted detection (or emission) times on one channel, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    tags: Vec<f64>,
    duration: f64,
    label: String,
}

impl TimeTagStream {
    /// Builds a stream, checking that tags are sorted and lie in `[0, duration]`.
    pub fn new(tags: Vec<f64>, duration: f64, label: impl Into<String>) -> Result<Self> {
        non_negative("duration", duration)?;
        if let Some(i) = tags.windows(2).position(|w| !(w[0] <= w[1])) {
            return Err(Error::ContractViolation(format!(
                "tags not sorted at index {}: {} > {}",
                i + 1,
                tags[i],
                tags[i + 1]
            )));
        }
        if let (Some(&first), Some(&last)) = (tags.first(), tags.last()) {
            if !(first >= 0.0 && last <= duration) {
                return Err(Error::ContractViolation(format!(
                    "tags span [{first}, {last}] outside [0, {duration}]"
                )));
            }
        }
        Ok(Self {
            tags,
            duration,
            label: label.into(),
        })
    }

    /// Callers guarantee sortedness and range.
    pub(crate) fn from_sorted(tags: Vec<f64>, duration: f64, label: impl Into<String>) -> Self {
        debug_assert!(tags.windows(2).all(|w| w[0] <= w[1]));
        Self {
            tags,
            duration,
            label: label.into(),
        }
    }

    pub fn empty(duration: f64, label: impl Into<String>) -> Self {
        Self::from_sorted(Vec::new(), duration, label)
    }

    pub fn tags(&self) -> &[f64] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<f64> {
        self.tags
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Mean count rate over the stream duration (zero for a zero-length stream).
    pub fn rate(&self) -> f64 {
        if self.duration > 0.0 {
            self.tags.len() as f64 / self.duration
        } else {
            0.0
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Merges two streams into one sorted stream. The duration is the larger of the two.
    pub fn merge(&self, other: &TimeTagStream, label: impl Into<String>) -> TimeTagStream {
        let (a, b) = (&self.tags, &other.tags);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        TimeTagStream::from_sorted(out, self.duration.max(other.duration), label)
    }

    pub(crate) fn ensure_sorted(&self, what: &str) -> Result<()> {
        if self.tags.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::ContractViolation(format!("{what} stream is not sorted")));
        }
        Ok(())
    }
}

/// Header metadata carried by a stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub channel: String,
    pub duration: f64,
    pub seed: Option<u64>,
}

pub fn seconds_to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

pub fn ps_to_seconds(ps: i64) -> f64 {
    ps as f64 / PS_PER_S
}

/// Writes `stream` in the `.tags` text format.
pub fn write_tags<W: Write>(mut out: W, stream: &TimeTagStream, seed: Option<u64>) -> std::io::Result<()> {
    let mut buf = String::with_capacity(64 + 14 * stream.len());
    let _ = writeln!(buf, "# channel: {}", stream.label());
    let _ = writeln!(buf, "# duration_s: {}", stream.duration());
    if let Some(seed) = seed {
        let _ = writeln!(buf, "# seed: {seed}");
    }
    for &t in stream.tags() {
        let _ = writeln!(buf, "{}", seconds_to_ps(t));
    }
    out.write_all(buf.as_bytes())
}

/// Reads a `.tags` text stream. Unknown header keys are ignored.
pub fn read_tags<R: BufRead>(input: R) -> Result<(TimeTagStream, StreamHeader)> {
    let mut header = StreamHeader {
        channel: String::new(),
        duration: f64::NAN,
        seed: None,
    };
    let mut tags = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once(':') {
                let value = value.trim();
                let bad = |message: String| Error::Parse {
                    line: lineno,
                    message,
                };
                match key.trim() {
                    "channel" => header.channel = value.to_string(),
                    "duration_s" => {
                        header.duration = value
                            .parse()
                            .map_err(|e| bad(format!("duration_s: {e}")))?
                    }
                    "seed" => {
                        header.seed = Some(value.parse().map_err(|e| bad(format!("seed: {e}")))?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        let ps: i64 = line.parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("timestamp `{line}`: {e}"),
        })?;
        tags.push(ps_to_seconds(ps));
    }
    if header.duration.is_nan() {
        header.duration = tags.last().copied().unwrap_or(0.0);
    }
    let stream = TimeTagStream::new(tags, header.duration, header.channel.clone())?;
    Ok((stream, header))
}
