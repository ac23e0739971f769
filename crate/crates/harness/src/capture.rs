//! Trace files on disk.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use satqic_core::trace::{Trace, TraceError};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: String, source: TraceError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CaptureError + '_ {
    move |source| CaptureError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Adapter so the core's `fmt::Write` serializer can stream into a file.
struct FmtToIo<W: Write> {
    inner: W,
    error: Option<io::Error>,
}

impl<W: Write> std::fmt::Write for FmtToIo<W> {
    fn write_str(&mut self, s: &str) -> std::fmt::Result {
        self.inner.write_all(s.as_bytes()).map_err(|e| {
            self.error = Some(e);
            std::fmt::Error
        })
    }
}

pub fn write_trace_to<W: Write>(trace: &Trace, sink: W) -> io::Result<()> {
    let mut w = FmtToIo {
        inner: BufWriter::new(sink),
        error: None,
    };
    if trace.write(&mut w).is_err() {
        return Err(w
            .error
            .unwrap_or_else(|| io::Error::other("trace formatting failed")));
    }
    w.inner.flush()
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<(), CaptureError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let f = File::create(path).map_err(io_err(path))?;
    write_trace_to(trace, f).map_err(io_err(path))
}

/// Reads a trace, rejecting a final line without its newline as truncated.
pub fn read_trace_from<R: io::Read>(source: R) -> Result<Trace, TraceReadError> {
    let mut lines = Vec::new();
    let mut reader = BufReader::new(source);
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(TraceReadError::Io)?;
        if n == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            return Err(TraceReadError::Format(TraceError::Parse {
                line: lines.len() + 1,
                message: "truncated final line".into(),
            }));
        }
        buf.pop();
        lines.push(std::mem::take(&mut buf));
    }
    Trace::parse_lines(lines.iter().map(String::as_str)).map_err(TraceReadError::Format)
}

#[derive(Debug, Error)]
pub enum TraceReadError {
    #[error(transparent)]
    Io(io::Error),
    #[error(transparent)]
    Format(TraceError),
}

pub fn read_trace(path: &Path) -> Result<Trace, CaptureError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_trace_from(f).map_err(|e| match e {
        TraceReadError::Io(source) => CaptureError::Io {
            path: path.display().to_string(),
            source,
        },
        TraceReadError::Format(source) => CaptureError::Format {
            path: path.display().to_string(),
            source,
        },
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_sha256(path: &Path) -> Result<String, CaptureError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use satqic_core::linkem::Direction;
    use satqic_core::trace::{Fate, PacketRecord, RunIdentity, Tap};
    use satqic_core::wire::{Annotation, PacketKind};

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.trace");
        let mut t = Trace::new(RunIdentity {
            scenario: "TERR".into(),
            client: "x".into(),
            server: "y".into(),
            iteration: 1,
            seed: 2,
        });
        t.record(PacketRecord {
            timestamp_ns: 1,
            tap: Tap::ServerSide,
            direction: Direction::Forward,
            size: 1500,
            fate: Fate::QueueOverflow,
            annotation: Some(Annotation {
                kind: PacketKind::Data,
                offset: 0,
                length: 1475,
                packet_number: 0,
            }),
        })
        .unwrap();
        write_trace(&t, &path).unwrap();
        assert_eq!(read_trace(&path).unwrap(), t);
    }

    #[test]
    fn truncated_file_fails_with_line() {
        let text = "#satqic-trace v1\n1 C F 10 D\n2 C F 1";
        match read_trace_from(text.as_bytes()) {
            Err(TraceReadError::Format(TraceError::Parse { line, .. })) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
