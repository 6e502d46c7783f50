//! Line-oriented exact traces.
//!
//! ```text
//! DEVSTRACE 1
//! T 47 INT /light1 GREEN YELLOW show_yellow
//! T 97/2 EXT /light1 YELLOW GOING_MANUAL toManual 3/2 +
//! T 97/2 YROOT turn_off
//! ```
//!
//! An `INT` line without output ends in `-`; an `EXT` line ends in `+` when
//! the event was consumed and `-` when it was discarded.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::formalism::EventLabel;
use crate::time::{parse_rational, Rational, TimeValue};

pub const HEADER: &str = "DEVSTRACE 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEntry {
    Internal {
        time: TimeValue,
        path: String,
        from: String,
        to: String,
        output: Option<EventLabel>,
    },
    External {
        time: TimeValue,
        path: String,
        from: String,
        to: String,
        input: EventLabel,
        elapsed: Rational,
        consumed: bool,
    },
    RootOutput {
        time: TimeValue,
        output: EventLabel,
    },
}

impl TraceEntry {
    pub fn time(&self) -> &TimeValue {
        match self {
            TraceEntry::Internal { time, .. }
            | TraceEntry::External { time, .. }
            | TraceEntry::RootOutput { time, .. } => time,
        }
    }

    pub fn is_root_output(&self) -> bool {
        matches!(self, TraceEntry::RootOutput { .. })
    }

    /// The canonical line, without trailing newline.
    pub fn format(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEntry::Internal {
                time,
                path,
                from,
                to,
                output,
            } => {
                let y = output.as_ref().map_or("-", EventLabel::as_str);
                write!(f, "T {time} INT {path} {from} {to} {y}")
            }
            TraceEntry::External {
                time,
                path,
                from,
                to,
                input,
                elapsed,
                consumed,
            } => {
                let flag = if *consumed { '+' } else { '-' };
                write!(f, "T {time} EXT {path} {from} {to} {input} {elapsed} {flag}")
            }
            TraceEntry::RootOutput { time, output } => write!(f, "T {time} YROOT {output}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

fn parse_entry(line: &str) -> Result<TraceEntry, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.iter().any(|f| f.is_empty()) {
        return Err("fields must be separated by single spaces".into());
    }
    let time = |s: &str| -> Result<TimeValue, String> {
        let t: TimeValue = s.parse().map_err(|e| format!("{e}"))?;
        if t.is_infinite() {
            return Err("entry time must be finite".into());
        }
        Ok(t)
    };
    match fields.as_slice() {
        ["T", t, "INT", path, from, to, y] => Ok(TraceEntry::Internal {
            time: time(t)?,
            path: path.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            output: (*y != "-").then(|| EventLabel::from(*y)),
        }),
        ["T", t, "EXT", path, from, to, x, e, flag] => {
            let consumed = match *flag {
                "+" => true,
                "-" => false,
                other => return Err(format!("bad consumed flag `{other}`")),
            };
            Ok(TraceEntry::External {
                time: time(t)?,
                path: path.to_string(),
                from: from.to_string(),
                to: to.to_string(),
                input: EventLabel::from(*x),
                elapsed: parse_rational(e).map_err(|e| e.to_string())?,
                consumed,
            })
        }
        ["T", t, "YROOT", y] => Ok(TraceEntry::RootOutput {
            time: time(t)?,
            output: EventLabel::from(*y),
        }),
        _ => Err(format!("unrecognised entry `{line}`")),
    }
}

/// An ordered list of entries with non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TraceEntry) {
        debug_assert!(self.entries.last().is_none_or(|last| last.time() <= entry.time()));
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEntry> {
        self.entries.iter()
    }

    /// Only the `YROOT` entries.
    pub fn root_outputs(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.is_root_output())
    }

    /// The file contents: header plus one `\n`-terminated line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.entries.len() + 1));
        out.push_str(HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.format());
            out.push('\n');
        }
        out
    }
}

impl FromStr for Trace {
    type Err = TraceParseError;

    /// Parses a trace file. Every line, including the last, must end in
    /// `\n`; a missing final newline is reported as truncation.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |line, message: &str| TraceParseError {
            line,
            message: message.to_string(),
        };
        if !text.ends_with('\n') {
            let last = text.lines().count().max(1);
            return Err(err(last, "truncated: missing final newline"));
        }
        let mut lines = text[..text.len() - 1].split('\n');
        if lines.next() != Some(HEADER) {
            return Err(err(1, "expected `DEVSTRACE 1` header"));
        }
        let mut trace = Trace::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let entry = parse_entry(line).map_err(|m| err(lineno, &m))?;
            if trace.entries.last().is_some_and(|last| last.time() > entry.time()) {
                return Err(err(lineno, "timestamps decrease"));
            }
            trace.entries.push(entry);
        }
        Ok(trace)
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a TraceEntry;
    type IntoIter = std::slice::Iter<'a, TraceEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// Which entries `diff_traces` compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffScope {
    #[default]
    All,
    RootOutputsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceDiff {
    Equal,
    /// First differing position (0-based, within the compared entries).
    /// `None` marks a trace that ended early.
    Diverged {
        index: usize,
        left: Option<String>,
        right: Option<String>,
    },
}

/// Compares canonical lines of the selected entries.
pub fn diff_traces(a: &Trace, b: &Trace, scope: DiffScope) -> TraceDiff {
    let select = |t: &Trace| -> Vec<String> {
        t.iter()
            .filter(|e| scope == DiffScope::All || e.is_root_output())
            .map(TraceEntry::format)
            .collect()
    };
    let (left, right) = (select(a), select(b));
    let n = left.len().max(right.len());
    for index in 0..n {
        let (l, r) = (left.get(index), right.get(index));
        if l != r {
            return TraceDiff::Diverged {
                index,
                left: l.cloned(),
                right: r.cloned(),
            };
        }
    }
    TraceDiff::Equal
}
