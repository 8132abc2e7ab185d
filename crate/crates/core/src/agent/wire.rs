//! Binary encoding of [`ProtocolMessage`].
//!
//! A frame is a big-endian `u32` body length followed by the body. The body
//! starts with a one-byte tag and then the message fields in declaration
//! order:
//!
//! | tag | message             | fields                                   |
//! |-----|---------------------|------------------------------------------|
//! | 1   | `XConnRequest`      | path_id, txn_id, hops                    |
//! | 2   | `XConnAck`          | path_id, txn_id                          |
//! | 3   | `XConnNack`         | path_id, txn_id, reason                  |
//! | 4   | `Teardown`          | path_id                                  |
//! | 5   | `PathLeaseRenew`    | path_id, round                           |
//! | 6   | `PathLeaseAck`      | path_id, round                           |
//! | 7   | `LossOfLightNotify` | path_id, update                          |
//! | 8   | `TopoAnnounce`      | update                                   |
//! | 9   | `TopoSyncRequest`   | (none)                                   |
//! | 10  | `TopoSnapshot`      | u32 count, updates                       |
//!
//! Primitive encodings: strings are a `u32` byte length plus UTF-8; integers
//! are big-endian; `f64` is its IEEE-754 bit pattern as a big-endian `u64`.
//! A hop list is a `u32` count of `(switch: str, in: u32, out: u32)`. An
//! update is `origin: str, span_id: str, state: u8 (0 lit, 1 cut), cost: f64,
//! origin_seq: u64, has_announce: u8` followed, when set, by two ports each
//! encoded as `(switch: str, port: u32)`.

use thiserror::Error;

use super::ProtocolMessage;
use crate::device::{PortRef, SpanState, SwitchId};
use crate::topology::{Hop, LinkStateUpdate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("frame length {declared} does not match body length {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("invalid utf-8 in string field")]
    BadString,
    #[error("invalid enum value {0}")]
    BadValue(u8),
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn port(&mut self, p: &PortRef) {
        self.str(p.switch.as_str());
        self.u32(p.port);
    }

    fn hops(&mut self, hops: &[Hop]) {
        self.u32(hops.len() as u32);
        for h in hops {
            self.str(h.switch.as_str());
            self.u32(h.in_port);
            self.u32(h.out_port);
        }
    }

    fn update(&mut self, u: &LinkStateUpdate) {
        self.str(&u.origin);
        self.str(&u.span_id);
        self.u8(match u.state {
            SpanState::Lit => 0,
            SpanState::Cut => 1,
        });
        self.f64(u.cost);
        self.u64(u.origin_seq);
        match &u.announce {
            None => self.u8(0),
            Some((a, b)) => {
                self.u8(1);
                self.port(a);
                self.port(b);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn str(&mut self) -> Result<String, WireError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| WireError::BadString)
    }

    fn port(&mut self) -> Result<PortRef, WireError> {
        let switch = SwitchId::new(self.str()?);
        Ok(PortRef {
            switch,
            port: self.u32()?,
        })
    }

    fn hops(&mut self) -> Result<Vec<Hop>, WireError> {
        let n = self.u32()?;
        (0..n)
            .map(|_| {
                Ok(Hop {
                    switch: SwitchId::new(self.str()?),
                    in_port: self.u32()?,
                    out_port: self.u32()?,
                })
            })
            .collect()
    }

    fn update(&mut self) -> Result<LinkStateUpdate, WireError> {
        let origin = self.str()?;
        let span_id = self.str()?;
        let state = match self.u8()? {
            0 => SpanState::Lit,
            1 => SpanState::Cut,
            v => return Err(WireError::BadValue(v)),
        };
        let cost = self.f64()?;
        let origin_seq = self.u64()?;
        let announce = match self.u8()? {
            0 => None,
            1 => Some((self.port()?, self.port()?)),
            v => return Err(WireError::BadValue(v)),
        };
        Ok(LinkStateUpdate {
            origin,
            span_id,
            state,
            cost,
            origin_seq,
            announce,
        })
    }
}

pub fn encode(msg: &ProtocolMessage) -> Vec<u8> {
    let mut w = Writer::default();
    match msg {
        ProtocolMessage::XConnRequest { path_id, txn_id, hops } => {
            w.u8(1);
            w.str(path_id);
            w.u64(*txn_id);
            w.hops(hops);
        }
        ProtocolMessage::XConnAck { path_id, txn_id } => {
            w.u8(2);
            w.str(path_id);
            w.u64(*txn_id);
        }
        ProtocolMessage::XConnNack {
            path_id,
            txn_id,
            reason,
        } => {
            w.u8(3);
            w.str(path_id);
            w.u64(*txn_id);
            w.str(reason);
        }
        ProtocolMessage::Teardown { path_id } => {
            w.u8(4);
            w.str(path_id);
        }
        ProtocolMessage::PathLeaseRenew { path_id, round } => {
            w.u8(5);
            w.str(path_id);
            w.u64(*round);
        }
        ProtocolMessage::PathLeaseAck { path_id, round } => {
            w.u8(6);
            w.str(path_id);
            w.u64(*round);
        }
        ProtocolMessage::LossOfLightNotify { path_id, update } => {
            w.u8(7);
            w.str(path_id);
            w.update(update);
        }
        ProtocolMessage::TopoAnnounce(u) => {
            w.u8(8);
            w.update(u);
        }
        ProtocolMessage::TopoSyncRequest => w.u8(9),
        ProtocolMessage::TopoSnapshot(us) => {
            w.u8(10);
            w.u32(us.len() as u32);
            for u in us {
                w.update(u);
            }
        }
    }
    let body = w.0;
    let mut frame = Vec::with_capacity(body.len() + 4);
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    frame
}

pub fn decode(frame: &[u8]) -> Result<ProtocolMessage, WireError> {
    if frame.len() < 4 {
        return Err(WireError::Truncated);
    }
    let declared = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    let body = &frame[4..];
    if declared != body.len() {
        return Err(WireError::LengthMismatch {
            declared,
            actual: body.len(),
        });
    }
    let mut r = Reader { buf: body };
    let msg = match r.u8()? {
        1 => ProtocolMessage::XConnRequest {
            path_id: r.str()?,
            txn_id: r.u64()?,
            hops: r.hops()?,
        },
        2 => ProtocolMessage::XConnAck {
            path_id: r.str()?,
            txn_id: r.u64()?,
        },
        3 => ProtocolMessage::XConnNack {
            path_id: r.str()?,
            txn_id: r.u64()?,
            reason: r.str()?,
        },
        4 => ProtocolMessage::Teardown { path_id: r.str()? },
        5 => ProtocolMessage::PathLeaseRenew {
            path_id: r.str()?,
            round: r.u64()?,
        },
        6 => ProtocolMessage::PathLeaseAck {
            path_id: r.str()?,
            round: r.u64()?,
        },
        7 => ProtocolMessage::LossOfLightNotify {
            path_id: r.str()?,
            update: r.update()?,
        },
        8 => ProtocolMessage::TopoAnnounce(r.update()?),
        9 => ProtocolMessage::TopoSyncRequest,
        10 => {
            let n = r.u32()?;
            ProtocolMessage::TopoSnapshot((0..n).map(|_| r.update()).collect::<Result<_, _>>()?)
        }
        t => return Err(WireError::UnknownTag(t)),
    };
    if !r.buf.is_empty() {
        return Err(WireError::LengthMismatch {
            declared,
            actual: declared - r.buf.len(),
        });
    }
    Ok(msg)
}
