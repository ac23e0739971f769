//! Capture records and the line-oriented trace format.
//!
//! ```text
//! #satqic-trace v1
//! #meta scenario=SAT
//! 1200000 C R 36 D req 0 0 0
//! 1200000 S F 1500 QO data 0 1475 0
//! ```
//!
//! Each record line is `ts_ns tap dir size fate [kind offset length pktno]`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::linkem::{Direction, PacketFate};
use crate::wire::{Annotation, PacketKind};

pub const TRACE_HEADER: &str = "#satqic-trace v1";

/// Which end of the emulated link saw the datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tap {
    ClientSide,
    ServerSide,
}

impl Tap {
    fn index(self) -> usize {
        match self {
            Tap::ClientSide => 0,
            Tap::ServerSide => 1,
        }
    }
}

/// Fate as stored in a trace. Delivery time is implicit in the record time
/// of the opposite tap, so it is not carried here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fate {
    Delivered,
    QueueOverflow,
    RandomLoss,
}

impl From<PacketFate> for Fate {
    fn from(f: PacketFate) -> Self {
        match f {
            PacketFate::Delivered(_) => Fate::Delivered,
            PacketFate::DroppedQueueOverflow => Fate::QueueOverflow,
            PacketFate::DroppedRandomLoss => Fate::RandomLoss,
        }
    }
}

/// Converts virtual seconds to trace nanoseconds.
pub fn to_ns(t: f64) -> u64 {
    libm::round(t * 1e9).max(0.0) as u64
}

pub fn to_seconds(ns: u64) -> f64 {
    ns as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp_ns: u64,
    pub tap: Tap,
    pub direction: Direction,
    pub size: u32,
    pub fate: Fate,
    pub annotation: Option<Annotation>,
}

impl PacketRecord {
    pub fn timestamp(&self) -> f64 {
        to_seconds(self.timestamp_ns)
    }

    pub fn kind(&self) -> Option<PacketKind> {
        self.annotation.map(|a| a.kind)
    }

    /// Byte range carried by an annotated Data record.
    pub fn data_range(&self) -> Option<core::ops::Range<u64>> {
        match self.annotation {
            Some(a) if a.kind == PacketKind::Data => Some(a.offset..a.offset + a.length as u64),
            _ => None,
        }
    }
}

/// Who ran, where, and with which seed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunIdentity {
    pub scenario: String,
    pub client: String,
    pub server: String,
    pub iteration: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("record at {ts} ns precedes the previous {last} ns on the same tap")]
    OutOfOrder { ts: u64, last: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub identity: RunIdentity,
    /// Additional `#meta` pairs beyond the run identity.
    pub meta: BTreeMap<String, String>,
    records: Vec<PacketRecord>,
    last: [Option<u64>; 2],
}

impl Trace {
    pub fn new(identity: RunIdentity) -> Self {
        Self {
            identity,
            ..Self::default()
        }
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record; timestamps must not go backwards within a tap.
    pub fn record(&mut self, rec: PacketRecord) -> Result<(), TraceError> {
        let slot = &mut self.last[rec.tap.index()];
        if let Some(last) = *slot {
            if rec.timestamp_ns < last {
                return Err(TraceError::OutOfOrder {
                    ts: rec.timestamp_ns,
                    last,
                });
            }
        }
        *slot = Some(rec.timestamp_ns);
        self.records.push(rec);
        Ok(())
    }

    pub fn tap(&self, tap: Tap) -> impl Iterator<Item = &PacketRecord> + '_ {
        self.records.iter().filter(move |r| r.tap == tap)
    }

    pub fn is_annotated(&self) -> bool {
        self.records.iter().any(|r| r.annotation.is_some())
    }

    /// Header and meta lines, each terminated by `\n`.
    pub fn write_header<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        writeln!(out, "{TRACE_HEADER}")?;
        let id = &self.identity;
        writeln!(out, "#meta scenario={}", id.scenario)?;
        writeln!(out, "#meta client={}", id.client)?;
        writeln!(out, "#meta server={}", id.server)?;
        writeln!(out, "#meta iteration={}", id.iteration)?;
        writeln!(out, "#meta seed={}", id.seed)?;
        for (k, v) in &self.meta {
            writeln!(out, "#meta {k}={v}")?;
        }
        Ok(())
    }

    pub fn write<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        self.write_header(out)?;
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write(&mut s).expect("writing to a String cannot fail");
        s
    }

    /// Parses a trace from its lines. Line numbers in errors are 1-based.
    pub fn parse_lines<'a, I>(lines: I) -> Result<Trace, TraceError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut trace = Trace::default();
        let mut header = false;
        for (i, line) in lines.into_iter().enumerate() {
            let n = i + 1;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if !header {
                if line != TRACE_HEADER {
                    return Err(parse_err(n, "missing trace header"));
                }
                header = true;
                continue;
            }
            if let Some(meta) = line.strip_prefix("#meta ") {
                let (k, v) = meta
                    .split_once('=')
                    .ok_or_else(|| parse_err(n, "meta line without '='"))?;
                trace.set_meta(k, v).map_err(|m| parse_err(n, m))?;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rec: PacketRecord = line.parse().map_err(|m: &str| parse_err(n, m))?;
            trace.record(rec).map_err(|e| parse_err(n, e.to_string()))?;
        }
        if !header {
            return Err(parse_err(1, "missing trace header"));
        }
        Ok(trace)
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        // Writers terminate every line, so a missing final newline means the
        // last record may be partial.
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(parse_err(text.lines().count(), "truncated final line"));
        }
        Trace::parse_lines(text.lines())
    }

    fn set_meta(&mut self, k: &str, v: &str) -> Result<(), &'static str> {
        let id = &mut self.identity;
        match k {
            "scenario" => id.scenario = v.into(),
            "client" => id.client = v.into(),
            "server" => id.server = v.into(),
            "iteration" => id.iteration = v.parse().map_err(|_| "bad iteration")?,
            "seed" => id.seed = v.parse().map_err(|_| "bad seed")?,
            _ => {
                self.meta.insert(k.into(), v.into());
            }
        }
        Ok(())
    }
}

fn kind_token(k: PacketKind) -> &'static str {
    match k {
        PacketKind::Request => "req",
        PacketKind::Data => "data",
        PacketKind::Ack => "ack",
        PacketKind::Fin => "fin",
    }
}

impl fmt::Display for PacketRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tap = match self.tap {
            Tap::ClientSide => "C",
            Tap::ServerSide => "S",
        };
        let dir = match self.direction {
            Direction::Forward => "F",
            Direction::Reverse => "R",
        };
        let fate = match self.fate {
            Fate::Delivered => "D",
            Fate::QueueOverflow => "QO",
            Fate::RandomLoss => "RL",
        };
        write!(f, "{} {tap} {dir} {} {fate}", self.timestamp_ns, self.size)?;
        if let Some(a) = &self.annotation {
            write!(
                f,
                " {} {} {} {}",
                kind_token(a.kind),
                a.offset,
                a.length,
                a.packet_number
            )?;
        }
        Ok(())
    }
}

impl FromStr for PacketRecord {
    type Err = &'static str;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 && fields.len() != 9 {
            return Err("expected 5 or 9 fields");
        }
        let timestamp_ns = fields[0].parse().map_err(|_| "bad timestamp")?;
        let tap = match fields[1] {
            "C" => Tap::ClientSide,
            "S" => Tap::ServerSide,
            _ => return Err("bad tap"),
        };
        let direction = match fields[2] {
            "F" => Direction::Forward,
            "R" => Direction::Reverse,
            _ => return Err("bad direction"),
        };
        let size = fields[3].parse().map_err(|_| "bad size")?;
        let fate = match fields[4] {
            "D" => Fate::Delivered,
            "QO" => Fate::QueueOverflow,
            "RL" => Fate::RandomLoss,
            _ => return Err("bad fate"),
        };
        let annotation = if fields.len() == 9 {
            let kind = match fields[5] {
                "req" => PacketKind::Request,
                "data" => PacketKind::Data,
                "ack" => PacketKind::Ack,
                "fin" => PacketKind::Fin,
                _ => return Err("bad kind"),
            };
            Some(Annotation {
                kind,
                offset: fields[6].parse().map_err(|_| "bad offset")?,
                length: fields[7].parse().map_err(|_| "bad length")?,
                packet_number: fields[8].parse().map_err(|_| "bad packet number")?,
            })
        } else {
            None
        };
        Ok(PacketRecord {
            timestamp_ns,
            tap,
            direction,
            size,
            fate,
            annotation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: u64, tap: Tap) -> PacketRecord {
        PacketRecord {
            timestamp_ns: ts,
            tap,
            direction: Direction::Forward,
            size: 1500,
            fate: Fate::Delivered,
            annotation: Some(Annotation {
                kind: PacketKind::Data,
                offset: 1475,
                length: 1475,
                packet_number: 1,
            }),
        }
    }

    #[test]
    fn per_tap_ordering() {
        let mut t = Trace::default();
        assert!(t.record(rec(0, Tap::ClientSide)).is_ok());
        assert!(t.record(rec(5, Tap::ClientSide)).is_ok());
        assert!(t.record(rec(4, Tap::ServerSide)).is_ok());
        assert_eq!(
            t.record(rec(4, Tap::ClientSide)),
            Err(TraceError::OutOfOrder { ts: 4, last: 5 })
        );
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn round_trip() {
        let mut t = Trace::new(RunIdentity {
            scenario: "SAT".into(),
            client: "cubic".into(),
            server: "newreno".into(),
            iteration: 3,
            seed: 99,
        });
        t.meta.insert("file_size".into(), "10485760".into());
        t.record(rec(10, Tap::ServerSide)).unwrap();
        let mut bare = rec(11, Tap::ClientSide);
        bare.annotation = None;
        bare.fate = Fate::RandomLoss;
        t.record(bare).unwrap();
        let text = t.to_text();
        assert_eq!(Trace::parse(&text).unwrap(), t);
    }

    #[test]
    fn empty_round_trip() {
        let t = Trace::default();
        assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut t = Trace::default();
        t.record(rec(10, Tap::ServerSide)).unwrap();
        t.record(rec(20, Tap::ServerSide)).unwrap();
        let text = t.to_text();
        let cut = &text[..text.len() - 6];
        assert!(matches!(Trace::parse(cut), Err(TraceError::Parse { .. })));
        assert!(matches!(
            Trace::parse(""),
            Err(TraceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "#satqic-trace v1\n#meta seed=1\n5 C F 10 D\n6 X F 10 D\n";
        assert_eq!(
            Trace::parse(text),
            Err(TraceError::Parse {
                line: 4,
                message: "bad tap".into()
            })
        );
    }
}
