//! Datagram format of the reference transfer protocol.
//!
//! All integers are big-endian. Every packet starts with a 13-byte header:
//!
//! ```text
//! 0      kind (0 request, 1 data, 2 ack, 3 fin)
//! 1..5   connection id
//! 5..13  packet number
//! ```
//!
//! Data: offset (8), length (4), payload. Ack: cumulative offset (8), range
//! count n <= 3 (1), then n x (start 8, length 4). Request: `GET /<name>\r\n`.
//! Fin: optional one-byte close code, 0 when absent.
//!
//! Headers travel in plaintext so a capture tap can annotate data offsets.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::MTU;

pub const HEADER_LEN: usize = 13;
pub const DATA_HEADER_LEN: usize = HEADER_LEN + 12;
pub const MAX_DATA_PAYLOAD: usize = MTU - DATA_HEADER_LEN;
pub const MAX_SACK_RANGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Request = 0,
    Data = 1,
    Ack = 2,
    Fin = 3,
}

impl PacketKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => PacketKind::Request,
            1 => PacketKind::Data,
            2 => PacketKind::Ack,
            3 => PacketKind::Fin,
            _ => return None,
        })
    }
}

/// Close codes carried by a Fin.
pub mod close_code {
    pub const OK: u8 = 0;
    pub const NOT_FOUND: u8 = 1;
    pub const BAD_REQUEST: u8 = 2;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Request {
        name: String,
    },
    Data {
        offset: u64,
        payload: Vec<u8>,
    },
    Ack {
        cumulative: u64,
        ranges: Vec<Range<u64>>,
    },
    Fin {
        code: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WirePacket {
    pub conn_id: u32,
    pub packet_number: u64,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("datagram of {0} bytes is too short")]
    Truncated(usize),
    #[error("unknown packet kind {0}")]
    UnknownKind(u8),
    #[error("data length field {declared} does not match payload of {actual} bytes")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("ack carries {0} ranges, at most 3 allowed")]
    TooManyRanges(usize),
    #[error("trailing bytes after packet body")]
    Trailing,
    #[error("malformed request line")]
    BadRequest,
    #[error("range overflows the 64-bit offset space")]
    Overflow,
}

/// Header fields a capture tap can read without touching the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub kind: PacketKind,
    /// Data offset, or the cumulative offset for an Ack; 0 otherwise.
    pub offset: u64,
    /// Payload length for Data, 0 otherwise.
    pub length: u32,
    pub packet_number: u64,
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u64(b: &[u8]) -> u64 {
    let mut a = [0u8; 8];
    a.copy_from_slice(&b[..8]);
    u64::from_be_bytes(a)
}

impl WirePacket {
    pub fn kind(&self) -> PacketKind {
        match self.body {
            Body::Request { .. } => PacketKind::Request,
            Body::Data { .. } => PacketKind::Data,
            Body::Ack { .. } => PacketKind::Ack,
            Body::Fin { .. } => PacketKind::Fin,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + match &self.body {
                Body::Request { name } => 7 + name.len(),
                Body::Data { payload, .. } => 12 + payload.len(),
                Body::Ack { ranges, .. } => 9 + 12 * ranges.len(),
                Body::Fin { code } => usize::from(*code != close_code::OK),
            }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.push(self.kind() as u8);
        out.extend_from_slice(&self.conn_id.to_be_bytes());
        out.extend_from_slice(&self.packet_number.to_be_bytes());
        match &self.body {
            Body::Request { name } => {
                out.extend_from_slice(b"GET /");
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(b"\r\n");
            }
            Body::Data { offset, payload } => {
                out.extend_from_slice(&offset.to_be_bytes());
                out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
                out.extend_from_slice(payload);
            }
            Body::Ack { cumulative, ranges } => {
                debug_assert!(ranges.len() <= MAX_SACK_RANGES);
                out.extend_from_slice(&cumulative.to_be_bytes());
                out.push(ranges.len() as u8);
                for r in ranges {
                    out.extend_from_slice(&r.start.to_be_bytes());
                    out.extend_from_slice(&((r.end - r.start) as u32).to_be_bytes());
                }
            }
            Body::Fin { code } => {
                if *code != close_code::OK {
                    out.push(*code);
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.encoded_len());
        self.encode(&mut v);
        v
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < HEADER_LEN {
            return Err(WireError::Truncated(buf.len()));
        }
        let kind = PacketKind::from_byte(buf[0]).ok_or(WireError::UnknownKind(buf[0]))?;
        let conn_id = be_u32(&buf[1..5]);
        let packet_number = be_u64(&buf[5..13]);
        let rest = &buf[HEADER_LEN..];
        let body = match kind {
            PacketKind::Request => {
                let line = rest
                    .strip_prefix(b"GET /")
                    .and_then(|r| r.strip_suffix(b"\r\n"))
                    .ok_or(WireError::BadRequest)?;
                let name = core::str::from_utf8(line).map_err(|_| WireError::BadRequest)?;
                if name.contains(['\r', '\n']) {
                    return Err(WireError::BadRequest);
                }
                Body::Request { name: name.into() }
            }
            PacketKind::Data => {
                if rest.len() < 12 {
                    return Err(WireError::Truncated(buf.len()));
                }
                let offset = be_u64(&rest[0..8]);
                let declared = be_u32(&rest[8..12]);
                let payload = &rest[12..];
                if declared as usize != payload.len() {
                    return Err(WireError::LengthMismatch {
                        declared,
                        actual: payload.len(),
                    });
                }
                offset
                    .checked_add(u64::from(declared))
                    .ok_or(WireError::Overflow)?;
                Body::Data {
                    offset,
                    payload: payload.to_vec(),
                }
            }
            PacketKind::Ack => {
                if rest.len() < 9 {
                    return Err(WireError::Truncated(buf.len()));
                }
                let cumulative = be_u64(&rest[0..8]);
                let n = rest[8] as usize;
                if n > MAX_SACK_RANGES {
                    return Err(WireError::TooManyRanges(n));
                }
                let body = &rest[9..];
                if body.len() < 12 * n {
                    return Err(WireError::Truncated(buf.len()));
                }
                if body.len() > 12 * n {
                    return Err(WireError::Trailing);
                }
                let mut ranges = Vec::with_capacity(n);
                for chunk in body.chunks_exact(12) {
                    let start = be_u64(&chunk[0..8]);
                    let len = u64::from(be_u32(&chunk[8..12]));
                    let end = start.checked_add(len).ok_or(WireError::Overflow)?;
                    ranges.push(start..end);
                }
                Body::Ack { cumulative, ranges }
            }
            PacketKind::Fin => match rest {
                [] => Body::Fin {
                    code: close_code::OK,
                },
                [code] => Body::Fin { code: *code },
                _ => return Err(WireError::Trailing),
            },
        };
        Ok(WirePacket {
            conn_id,
            packet_number,
            body,
        })
    }
}

/// Reads the annotation of a datagram, or `None` if it does not parse as a
/// valid packet of this protocol.
pub fn annotate(buf: &[u8]) -> Option<Annotation> {
    // Full validation keeps annotation presence equivalent to decodability.
    let pkt = WirePacket::decode(buf).ok()?;
    let (offset, length) = match &pkt.body {
        Body::Data { offset, payload } => (*offset, payload.len() as u32),
        Body::Ack { cumulative, .. } => (*cumulative, 0),
        _ => (0, 0),
    };
    Some(Annotation {
        kind: pkt.kind(),
        offset,
        length,
        packet_number: pkt.packet_number,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn data_layout() {
        let p = WirePacket {
            conn_id: 0x01020304,
            packet_number: 7,
            body: Body::Data {
                offset: 1475,
                payload: vec![0xaa; 3],
            },
        };
        let b = p.to_bytes();
        assert_eq!(b.len(), DATA_HEADER_LEN + 3);
        assert_eq!(&b[..13], &[1, 1, 2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 7]);
        assert_eq!(&b[13..21], &1475u64.to_be_bytes());
        assert_eq!(&b[21..25], &3u32.to_be_bytes());
        assert_eq!(WirePacket::decode(&b).unwrap(), p);
    }

    #[test]
    fn ack_layout() {
        let p = WirePacket {
            conn_id: 9,
            packet_number: 1,
            body: Body::Ack {
                cumulative: 3000,
                ranges: vec![4500..6000, 9000..9100],
            },
        };
        let b = p.to_bytes();
        assert_eq!(b.len(), 13 + 9 + 24);
        assert_eq!(b[0], 2);
        assert_eq!(b[21], 2);
        assert_eq!(&b[22..30], &4500u64.to_be_bytes());
        assert_eq!(&b[30..34], &1500u32.to_be_bytes());
        assert_eq!(WirePacket::decode(&b).unwrap(), p);
    }

    #[test]
    fn request_layout() {
        let p = WirePacket {
            conn_id: 1,
            packet_number: 0,
            body: Body::Request {
                name: "file.bin".into(),
            },
        };
        let b = p.to_bytes();
        assert_eq!(&b[13..], b"GET /file.bin\r\n");
        assert_eq!(WirePacket::decode(&b).unwrap(), p);
    }

    #[test]
    fn fin_codes() {
        let ok = WirePacket {
            conn_id: 1,
            packet_number: 5,
            body: Body::Fin {
                code: close_code::OK,
            },
        };
        assert_eq!(ok.to_bytes().len(), HEADER_LEN);
        let nf = WirePacket {
            body: Body::Fin {
                code: close_code::NOT_FOUND,
            },
            ..ok.clone()
        };
        assert_eq!(WirePacket::decode(&nf.to_bytes()).unwrap(), nf);
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(WirePacket::decode(&[1, 2, 3]), Err(WireError::Truncated(3)));
        let mut b = vec![9u8; 13];
        assert_eq!(WirePacket::decode(&b), Err(WireError::UnknownKind(9)));
        b[0] = 1;
        b.extend_from_slice(&0u64.to_be_bytes());
        b.extend_from_slice(&10u32.to_be_bytes());
        b.extend_from_slice(&[0; 4]);
        assert!(matches!(
            WirePacket::decode(&b),
            Err(WireError::LengthMismatch {
                declared: 10,
                actual: 4
            })
        ));
        let mut ack = vec![2u8; 13];
        ack.extend_from_slice(&0u64.to_be_bytes());
        ack.push(4);
        assert_eq!(WirePacket::decode(&ack), Err(WireError::TooManyRanges(4)));
        let mut req = vec![0u8; 13];
        req.extend_from_slice(b"POST /x\r\n");
        assert_eq!(WirePacket::decode(&req), Err(WireError::BadRequest));
    }

    #[test]
    fn annotation_of_opaque_bytes_is_none() {
        assert_eq!(annotate(b"\x17\x03\x03 not ours"), None);
        let p = WirePacket {
            conn_id: 1,
            packet_number: 42,
            body: Body::Data {
                offset: 100,
                payload: vec![1; 10],
            },
        };
        assert_eq!(
            annotate(&p.to_bytes()),
            Some(Annotation {
                kind: PacketKind::Data,
                offset: 100,
                length: 10,
                packet_number: 42
            })
        );
    }
}
