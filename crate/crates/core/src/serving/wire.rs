//! Length-prefixed frames: `type u8 | length u64 LE | payload`.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::enclave::ErrorCode;
use crate::nn::Shape;

pub const MAX_PAYLOAD: u64 = 64 << 20;
pub const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    AttestRequest = 0x02,
    AttestEvidence = 0x03,
    ProvisionKeys = 0x04,
    Predict = 0x05,
    Result = 0x06,
    Error = 0x07,
}

impl MessageType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MessageType::*;
        [
            Hello,
            AttestRequest,
            AttestEvidence,
            ProvisionKeys,
            Predict,
            Result,
            Error,
        ]
        .into_iter()
        .find(|t| *t as u8 == v)
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("connection closed")]
    Closed,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the 64 MiB limit")]
    TooLarge(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        WireMessage { kind, payload }
    }

    pub fn error(code: ErrorCode, message: &str) -> Self {
        let mut payload = (code as u16).to_le_bytes().to_vec();
        payload.extend_from_slice(message.as_bytes());
        WireMessage::new(MessageType::Error, payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// `(code, message)` of an Error frame.
    pub fn error_parts(&self) -> Option<(u16, String)> {
        if self.kind != MessageType::Error || self.payload.len() < 2 {
            return None;
        }
        let code = u16::from_le_bytes([self.payload[0], self.payload[1]]);
        Some((code, String::from_utf8_lossy(&self.payload[2..]).into_owned()))
    }
}

/// Server greeting: top-k size and the model's input shape, all u32 LE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerHello {
    pub k: usize,
    pub input_shape: Shape,
}

impl ServerHello {
    pub fn to_payload(&self) -> Vec<u8> {
        [
            self.k,
            self.input_shape.width,
            self.input_shape.height,
            self.input_shape.channels,
        ]
        .iter()
        .flat_map(|&v| (v as u32).to_le_bytes())
        .collect()
    }

    pub fn from_payload(payload: &[u8]) -> Option<Self> {
        if payload.len() != 16 {
            return None;
        }
        let v: Vec<usize> = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Some(ServerHello {
            k: v[0],
            input_shape: Shape::new(v[1], v[2], v[3]),
        })
    }
}

/// Reads one frame. A clean EOF before the first header byte is `Closed`;
/// oversized payloads are rejected before any payload byte is read.
pub fn read_message<R: Read>(r: &mut R) -> Result<WireMessage, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(WireError::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let kind = MessageType::from_u8(header[0]).ok_or(WireError::UnknownType(header[0]))?;
    let len = u64::from_le_bytes(header[1..].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(WireMessage { kind, payload })
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> io::Result<()> {
    w.write_all(&msg.to_bytes())?;
    w.flush()
}
