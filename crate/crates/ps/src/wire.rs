//! Binary framing between trainers and shard servers.
//!
//! Every message, in both directions, is a frame (all integers little-endian):
//!
//! ```text
//! magic   u32  0x47345250
//! version u8   1
//! opcode  u8   1=PULL 2=PUSH 3=SAVE 4=LOAD 5=PING
//! length  u32  payload bytes
//! payload
//! ```
//!
//! Request payloads:
//!
//! * PULL: `n u32, n x key u64`
//! * PUSH: `n u32, dim u32, lr f32, n x (key u64, dim x f32)`
//! * SAVE: UTF-8 path
//! * LOAD: `mode u8` (0 = replace, 1 = merge/warm start), UTF-8 path
//! * PING: empty
//!
//! Responses echo the request opcode. The payload starts with a status byte.
//! On status 0 a PULL response continues with `dim u32, n x dim f32` and a LOAD
//! response with `count u64`; the others carry nothing more. A non-zero status
//! is followed by a UTF-8 error message.

use std::io::{self, Read, Write};

use crate::{PsError, Result};

pub const MAGIC: u32 = 0x4734_5250;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Pull = 1,
    Push = 2,
    Save = 3,
    Load = 4,
    Ping = 5,
}

impl TryFrom<u8> for Opcode {
    type Error = PsError;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Opcode::Pull,
            2 => Opcode::Push,
            3 => Opcode::Save,
            4 => Opcode::Load,
            5 => Opcode::Ping,
            other => return Err(PsError::Protocol(format!("unknown opcode {other}"))),
        })
    }
}

pub mod status {
    pub const OK: u8 = 0;
    pub const MALFORMED: u8 = 1;
    pub const DIM_MISMATCH: u8 = 2;
    pub const STORAGE: u8 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    Replace = 0,
    Merge = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Pull { keys: Vec<u64> },
    Push { dim: u32, lr: f32, keys: Vec<u64>, grads: Vec<f32> },
    Save { path: String },
    Load { mode: LoadMode, path: String },
    Ping,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Pulled { dim: u32, values: Vec<f32> },
    Ack,
    Loaded { count: u64 },
    Error { status: u8, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub payload: Vec<u8>,
}

impl Request {
    pub fn opcode(&self) -> Opcode {
        match self {
            Request::Pull { .. } => Opcode::Pull,
            Request::Push { .. } => Opcode::Push,
            Request::Save { .. } => Opcode::Save,
            Request::Load { .. } => Opcode::Load,
            Request::Ping => Opcode::Ping,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Request::Pull { keys } => {
                put_u32(&mut p, keys.len() as u32);
                keys.iter().for_each(|k| put_u64(&mut p, *k));
            }
            Request::Push { dim, lr, keys, grads } => {
                put_u32(&mut p, keys.len() as u32);
                put_u32(&mut p, *dim);
                p.extend_from_slice(&lr.to_le_bytes());
                let d = *dim as usize;
                for (i, k) in keys.iter().enumerate() {
                    put_u64(&mut p, *k);
                    grads[i * d..(i + 1) * d].iter().for_each(|g| p.extend_from_slice(&g.to_le_bytes()));
                }
            }
            Request::Save { path } => p.extend_from_slice(path.as_bytes()),
            Request::Load { mode, path } => {
                p.push(*mode as u8);
                p.extend_from_slice(path.as_bytes());
            }
            Request::Ping => {}
        }
        frame_bytes(self.opcode() as u8, &p)
    }

    pub fn decode(frame: &Frame) -> Result<Self> {
        let op = Opcode::try_from(frame.opcode)?;
        let mut c = Cursor::new(&frame.payload);
        let req = match op {
            Opcode::Pull => {
                let n = c.u32()? as usize;
                c.expect_remaining(n.checked_mul(8))?;
                Request::Pull { keys: (0..n).map(|_| c.u64()).collect::<Result<_>>()? }
            }
            Opcode::Push => {
                let n = c.u32()? as usize;
                let dim = c.u32()?;
                let lr = c.f32()?;
                let rec = 8usize.checked_add((dim as usize).checked_mul(4).ok_or_else(overflow)?).ok_or_else(overflow)?;
                c.expect_remaining(n.checked_mul(rec))?;
                let mut keys = Vec::with_capacity(n);
                let mut grads = Vec::with_capacity(n * dim as usize);
                for _ in 0..n {
                    keys.push(c.u64()?);
                    for _ in 0..dim {
                        grads.push(c.f32()?);
                    }
                }
                Request::Push { dim, lr, keys, grads }
            }
            Opcode::Save => Request::Save { path: c.rest_utf8()? },
            Opcode::Load => {
                let mode = match c.u8()? {
                    0 => LoadMode::Replace,
                    1 => LoadMode::Merge,
                    m => return Err(PsError::Protocol(format!("unknown load mode {m}"))),
                };
                Request::Load { mode, path: c.rest_utf8()? }
            }
            Opcode::Ping => {
                c.expect_remaining(Some(0))?;
                Request::Ping
            }
        };
        c.finish()?;
        Ok(req)
    }
}

impl Response {
    /// Encodes a response echoing `opcode` (raw, so error replies can answer
    /// frames whose opcode was not understood).
    pub fn encode(&self, opcode: u8) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Response::Pulled { dim, values } => {
                p.push(status::OK);
                put_u32(&mut p, *dim);
                values.iter().for_each(|v| p.extend_from_slice(&v.to_le_bytes()));
            }
            Response::Ack => p.push(status::OK),
            Response::Loaded { count } => {
                p.push(status::OK);
                put_u64(&mut p, *count);
            }
            Response::Error { status, message } => {
                p.push(*status);
                p.extend_from_slice(message.as_bytes());
            }
        }
        frame_bytes(opcode, &p)
    }

    pub fn decode(frame: &Frame) -> Result<Self> {
        let mut c = Cursor::new(&frame.payload);
        let st = c.u8()?;
        if st != status::OK {
            return Ok(Response::Error { status: st, message: c.rest_utf8()? });
        }
        let op = Opcode::try_from(frame.opcode)?;
        let resp = match op {
            Opcode::Pull => {
                let dim = c.u32()?;
                let left = c.remaining();
                if !left.is_multiple_of(4) || (dim == 0 && left != 0) || (dim > 0 && !left.is_multiple_of(4 * dim as usize)) {
                    return Err(PsError::Protocol(format!("pull response body of {left} bytes is not a multiple of dim {dim}")));
                }
                let values = (0..left / 4).map(|_| c.f32()).collect::<Result<_>>()?;
                Response::Pulled { dim, values }
            }
            Opcode::Load => Response::Loaded { count: c.u64()? },
            Opcode::Push | Opcode::Save | Opcode::Ping => Response::Ack,
        };
        c.finish()?;
        Ok(resp)
    }
}

fn overflow() -> PsError {
    PsError::Protocol("length overflow".into())
}

fn frame_bytes(opcode: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    put_u32(&mut out, MAGIC);
    out.push(VERSION);
    out.push(opcode);
    put_u32(&mut out, payload.len() as u32);
    out.extend_from_slice(payload);
    out
}

/// Splits one complete frame off the front of `bytes`.
pub fn parse_frame(bytes: &[u8]) -> Result<(Frame, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(PsError::Protocol("short frame header".into()));
    }
    let (opcode, len) = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(PsError::Protocol(format!("frame declares {len} payload bytes, {} present", bytes.len() - HEADER_LEN)));
    }
    Ok((Frame { opcode, payload: bytes[HEADER_LEN..end].to_vec() }, end))
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, usize)> {
    let magic = u32::from_le_bytes(h[..4].try_into().unwrap());
    if magic != MAGIC {
        return Err(PsError::Protocol(format!("bad magic {magic:#010x}")));
    }
    if h[4] != VERSION {
        return Err(PsError::Protocol(format!("unsupported version {}", h[4])));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(PsError::Protocol(format!("payload of {len} bytes exceeds limit")));
    }
    Ok((h[5], len))
}

/// Reads one frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<std::result::Result<Frame, PsError>>> {
    let mut h = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut h[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let (opcode, len) = match parse_header(&h) {
        Ok(x) => x,
        Err(e) => return Ok(Some(Err(e))),
    };
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(Ok(Frame { opcode, payload })))
}

pub fn write_all<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    w.write_all(bytes)?;
    w.flush()
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(PsError::Protocol(format!("payload truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn rest_utf8(&mut self) -> Result<String> {
        let rest = self.take(self.remaining())?;
        String::from_utf8(rest.to_vec()).map_err(|_| PsError::Protocol("invalid UTF-8".into()))
    }

    fn expect_remaining(&self, n: Option<usize>) -> Result<()> {
        match n {
            Some(n) if n == self.remaining() => Ok(()),
            Some(n) => Err(PsError::Protocol(format!("expected {n} more payload bytes, found {}", self.remaining()))),
            None => Err(overflow()),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(PsError::Protocol(format!("{} trailing payload bytes", self.remaining())));
        }
        Ok(())
    }
}
