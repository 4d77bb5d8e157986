//! Byte-level ecall interface. Every message crossing the boundary is
//! `type u8 | length u64 LE | payload`, and an optional [`Tap`] records both
//! directions so tests can audit exactly what the host saw.

use crate::audit::Tap;
use crate::crypto::{SealedContainer, SecretKey};
use crate::nn::Tensor;

use super::{EnclaveError, EnclaveSession, Evidence, SessionState};

const REQ_ATTEST: u8 = 0x11;
const REQ_PROVISION: u8 = 0x12;
const REQ_INFER: u8 = 0x13;
const REQ_MAP: u8 = 0x14;
const RESP_EVIDENCE: u8 = 0x21;
const RESP_PROVISIONED: u8 = 0x22;
const RESP_IR: u8 = 0x23;
const RESP_RESULT: u8 = 0x24;
const RESP_ERROR: u8 = 0x2f;

/// Error codes shared by the ecall interface and the wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    AuthFailure = 1,
    NotReady = 2,
    TooLarge = 3,
    Malformed = 4,
    Internal = 5,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        match v {
            1 => Some(ErrorCode::AuthFailure),
            2 => Some(ErrorCode::NotReady),
            3 => Some(ErrorCode::TooLarge),
            4 => Some(ErrorCode::Malformed),
            5 => Some(ErrorCode::Internal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::AuthFailure => "auth_failure",
            ErrorCode::NotReady => "not_ready",
            ErrorCode::TooLarge => "too_large",
            ErrorCode::Malformed => "malformed",
            ErrorCode::Internal => "internal",
        }
    }
}

impl From<&EnclaveError> for ErrorCode {
    fn from(e: &EnclaveError) -> Self {
        match e {
            EnclaveError::WrongState { .. } => ErrorCode::NotReady,
            EnclaveError::Authentication(_) | EnclaveError::Attestation(_) => ErrorCode::AuthFailure,
            EnclaveError::Malformed(_) | EnclaveError::ClassIndex { .. } => ErrorCode::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryRequest {
    Attest([u8; 32]),
    Provision(SealedContainer),
    Infer(SealedContainer),
    MapClasses(Vec<(usize, f32)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryResponse {
    Evidence(Evidence),
    Provisioned,
    Ir(Tensor),
    Result(SealedContainer),
    /// Denials carry only the code.
    Error(u16),
}

fn frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + payload.len());
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

fn unframe(bytes: &[u8]) -> Result<(u8, &[u8]), EnclaveError> {
    if bytes.len() < 9 {
        return Err(EnclaveError::Malformed(
            "boundary message shorter than its header".into(),
        ));
    }
    let len = u64::from_le_bytes(bytes[1..9].try_into().unwrap());
    if len != (bytes.len() - 9) as u64 {
        return Err(EnclaveError::Malformed("boundary message length mismatch".into()));
    }
    Ok((bytes[0], &bytes[9..]))
}

pub fn encode_map_request(top: &[(usize, f32)]) -> Vec<u8> {
    let mut payload = (top.len() as u32).to_le_bytes().to_vec();
    for &(index, score) in top {
        payload.extend_from_slice(&(index as u32).to_le_bytes());
        payload.extend_from_slice(&score.to_le_bytes());
    }
    payload
}

pub fn decode_map_request(payload: &[u8]) -> Result<Vec<(usize, f32)>, EnclaveError> {
    let bad = || EnclaveError::Malformed("bad class-mapping request".into());
    if payload.len() < 4 {
        return Err(bad());
    }
    let count = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    let body = &payload[4..];
    if count.checked_mul(8) != Some(body.len()) {
        return Err(bad());
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes(c[..4].try_into().unwrap()) as usize,
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn encode_request(req: &BoundaryRequest) -> Vec<u8> {
    match req {
        BoundaryRequest::Attest(nonce) => frame(REQ_ATTEST, nonce),
        BoundaryRequest::Provision(c) => frame(REQ_PROVISION, &c.to_bytes()),
        BoundaryRequest::Infer(c) => frame(REQ_INFER, &c.to_bytes()),
        BoundaryRequest::MapClasses(top) => frame(REQ_MAP, &encode_map_request(top)),
    }
}

pub fn decode_request(bytes: &[u8]) -> Result<BoundaryRequest, EnclaveError> {
    let (kind, payload) = unframe(bytes)?;
    Ok(match kind {
        REQ_ATTEST => BoundaryRequest::Attest(
            payload
                .try_into()
                .map_err(|_| EnclaveError::Malformed("attestation nonce must be 32 bytes".into()))?,
        ),
        REQ_PROVISION => BoundaryRequest::Provision(SealedContainer::from_bytes(payload)?),
        REQ_INFER => BoundaryRequest::Infer(SealedContainer::from_bytes(payload)?),
        REQ_MAP => BoundaryRequest::MapClasses(decode_map_request(payload)?),
        other => return Err(EnclaveError::Malformed(format!("unknown ecall type {other:#04x}"))),
    })
}

pub fn encode_response(resp: &BoundaryResponse) -> Vec<u8> {
    match resp {
        BoundaryResponse::Evidence(e) => frame(RESP_EVIDENCE, &e.to_bytes()),
        BoundaryResponse::Provisioned => frame(RESP_PROVISIONED, &[]),
        BoundaryResponse::Ir(t) => frame(RESP_IR, &t.to_bytes()),
        BoundaryResponse::Result(c) => frame(RESP_RESULT, &c.to_bytes()),
        BoundaryResponse::Error(code) => frame(RESP_ERROR, &code.to_le_bytes()),
    }
}

pub fn decode_response(bytes: &[u8]) -> Result<BoundaryResponse, EnclaveError> {
    let (kind, payload) = unframe(bytes)?;
    let bad = |what: &str| EnclaveError::Malformed(format!("bad {what} response"));
    Ok(match kind {
        RESP_EVIDENCE => BoundaryResponse::Evidence(Evidence::from_bytes(payload).ok_or_else(|| bad("evidence"))?),
        RESP_PROVISIONED if payload.is_empty() => BoundaryResponse::Provisioned,
        RESP_IR => BoundaryResponse::Ir(Tensor::from_bytes(payload).map_err(|_| bad("IR"))?),
        RESP_RESULT => BoundaryResponse::Result(SealedContainer::from_bytes(payload)?),
        RESP_ERROR if payload.len() == 2 => BoundaryResponse::Error(u16::from_le_bytes([payload[0], payload[1]])),
        other => return Err(EnclaveError::Malformed(format!("unknown ecall response {other:#04x}"))),
    })
}

/// A loaded enclave reachable only through [`Enclave::ecall`]. The attestation
/// root key stands in for a hardware-held key: it is fixed at launch and never
/// crosses the boundary.
pub struct Enclave {
    session: EnclaveSession,
    platform_root: SecretKey,
    tap: Option<Tap>,
}

impl Enclave {
    pub fn launch(session: EnclaveSession, platform_root: SecretKey) -> Self {
        Enclave {
            session,
            platform_root,
            tap: None,
        }
    }

    /// Records every request and response byte into `tap`.
    pub fn with_tap(mut self, tap: Tap) -> Self {
        self.tap = Some(tap);
        self
    }

    pub fn measurement(&self) -> [u8; 32] {
        self.session.measurement()
    }

    pub fn state(&self) -> SessionState {
        self.session.state()
    }

    pub fn ecall(&mut self, request: &[u8]) -> Vec<u8> {
        if let Some(tap) = &self.tap {
            tap.record(request);
        }
        let response = match decode_request(request).and_then(|req| self.dispatch(req)) {
            Ok(resp) => resp,
            Err(e) => BoundaryResponse::Error(ErrorCode::from(&e) as u16),
        };
        let bytes = encode_response(&response);
        if let Some(tap) = &self.tap {
            tap.record(&bytes);
        }
        bytes
    }

    fn dispatch(&mut self, req: BoundaryRequest) -> Result<BoundaryResponse, EnclaveError> {
        Ok(match req {
            BoundaryRequest::Attest(nonce) => {
                BoundaryResponse::Evidence(self.session.attest(nonce, &self.platform_root)?)
            }
            BoundaryRequest::Provision(msg) => {
                self.session.provision_keys(&msg)?;
                BoundaryResponse::Provisioned
            }
            BoundaryRequest::Infer(img) => BoundaryResponse::Ir(self.session.infer_encrypted_image(&img)?),
            BoundaryRequest::MapClasses(top) => BoundaryResponse::Result(self.session.map_classes(&top)?),
        })
    }
}
