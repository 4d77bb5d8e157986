//! AES-256-GCM sealed containers.
//!
//! Layout: `IRSC` | version u32 LE | content-type u8 | nonce (12) |
//! ciphertext length u64 LE | ciphertext | tag (16). The header (magic,
//! version, content type) plus an optional caller-supplied context is bound as
//! associated data, so a container opened under the wrong type or context
//! fails authentication just like a tampered one.

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce, Tag};
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CONTAINER_MAGIC: &[u8; 4] = b"IRSC";
pub const CONTAINER_VERSION: u32 = 1;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
const HEADER_LEN: usize = 4 + 4 + 1 + NONCE_LEN + 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("container authentication failed")]
    Authentication,
    #[error("malformed container: {0}")]
    Framing(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
}

/// A 256-bit symmetric key. `Debug` never prints the key material.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SecretKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidKey(format!("expected 32 bytes, got {}", bytes.len())))?;
        Ok(SecretKey(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let text = text.trim();
        if text.len() != 64 {
            return Err(CryptoError::InvalidKey(format!(
                "expected 64 hex characters, got {}",
                text.len()
            )));
        }
        let bytes = hex::decode(text).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    pub fn generate<R: Rng + CryptoRng>(rng: &mut R) -> Self {
        SecretKey(rng.random())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ContentType {
    FrontNet = 1,
    Labels = 2,
    Image = 3,
    Result = 4,
    /// Key-provisioning message from a client to an attested enclave.
    Keys = 5,
}

impl ContentType {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ContentType::FrontNet),
            2 => Some(ContentType::Labels),
            3 => Some(ContentType::Image),
            4 => Some(ContentType::Result),
            5 => Some(ContentType::Keys),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContentType::FrontNet => "frontnet",
            ContentType::Labels => "labels",
            ContentType::Image => "image",
            ContentType::Result => "result",
            ContentType::Keys => "keys",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        (1..=5).filter_map(Self::from_u8).find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedContainer {
    pub version: u32,
    pub content_type: ContentType,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

fn associated_data(version: u32, content_type: ContentType, context: &[u8]) -> Vec<u8> {
    let mut aad = Vec::with_capacity(9 + context.len());
    aad.extend_from_slice(CONTAINER_MAGIC);
    aad.extend_from_slice(&version.to_le_bytes());
    aad.push(content_type as u8);
    aad.extend_from_slice(context);
    aad
}

/// Seals `plaintext` under a fresh random nonce.
pub fn seal(plaintext: &[u8], key: &SecretKey, content_type: ContentType) -> SealedContainer {
    seal_with_context(plaintext, key, content_type, &[], rand::rng().random())
}

/// Seals with an explicit nonce and extra associated data. Callers own nonce
/// uniqueness per key.
pub fn seal_with_context(
    plaintext: &[u8],
    key: &SecretKey,
    content_type: ContentType,
    context: &[u8],
    nonce: [u8; NONCE_LEN],
) -> SealedContainer {
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    let mut buffer = plaintext.to_vec();
    let aad = associated_data(CONTAINER_VERSION, content_type, context);
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), &aad, &mut buffer)
        .expect("AES-GCM accepts any message below 64 GiB");
    SealedContainer {
        version: CONTAINER_VERSION,
        content_type,
        nonce,
        ciphertext: buffer,
        tag: tag.into(),
    }
}

/// Verifies and decrypts under the container's own content type.
pub fn open(c: &SealedContainer, key: &SecretKey) -> Result<Vec<u8>, CryptoError> {
    open_as(c, key, c.content_type, &[])
}

/// Verifies and decrypts as `expected` with extra associated data `context`.
/// A container of any other type fails authentication.
pub fn open_as(
    c: &SealedContainer,
    key: &SecretKey,
    expected: ContentType,
    context: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    let mut buffer = c.ciphertext.clone();
    let aad = associated_data(c.version, expected, context);
    cipher
        .decrypt_in_place_detached(Nonce::from_slice(&c.nonce), &aad, &mut buffer, Tag::from_slice(&c.tag))
        .map_err(|_| CryptoError::Authentication)?;
    if c.content_type != expected {
        return Err(CryptoError::Authentication);
    }
    Ok(buffer)
}

impl SealedContainer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.content_type as u8);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < HEADER_LEN + TAG_LEN {
            return Err(CryptoError::Framing(format!(
                "{} bytes is shorter than the minimum container",
                bytes.len()
            )));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(CryptoError::Framing("missing IRSC magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(CryptoError::Framing(format!("unsupported version {version}")));
        }
        let content_type = ContentType::from_u8(bytes[8])
            .ok_or_else(|| CryptoError::Framing(format!("unknown content type {}", bytes[8])))?;
        let nonce: [u8; NONCE_LEN] = bytes[9..9 + NONCE_LEN].try_into().unwrap();
        let len = u64::from_le_bytes(bytes[9 + NONCE_LEN..HEADER_LEN].try_into().unwrap());
        let remaining = (bytes.len() - HEADER_LEN - TAG_LEN) as u64;
        if len != remaining {
            return Err(CryptoError::Framing(format!(
                "declared ciphertext length {len} but {remaining} bytes present"
            )));
        }
        let end = bytes.len() - TAG_LEN;
        Ok(SealedContainer {
            version,
            content_type,
            nonce,
            ciphertext: bytes[HEADER_LEN..end].to_vec(),
            tag: bytes[end..].try_into().unwrap(),
        })
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(b: u8) -> SecretKey {
        SecretKey::from_bytes([b; 32])
    }

    #[test]
    fn empty_plaintext() {
        let c = seal(b"", &key(1), ContentType::Image);
        assert!(c.ciphertext.is_empty());
        assert_eq!(c.to_bytes().len(), HEADER_LEN + TAG_LEN);
        assert_eq!(open(&c, &key(1)).unwrap(), b"");
    }

    #[test]
    fn round_trip_and_wrong_key() {
        let c = seal(b"frontnet weights", &key(1), ContentType::FrontNet);
        assert_eq!(open(&c, &key(1)).unwrap(), b"frontnet weights");
        assert_eq!(open(&c, &key(2)), Err(CryptoError::Authentication));
    }

    #[test]
    fn content_type_is_bound() {
        let c = seal(b"labels", &key(1), ContentType::Labels);
        let mut relabeled = c.clone();
        relabeled.content_type = ContentType::Image;
        assert_eq!(open(&relabeled, &key(1)), Err(CryptoError::Authentication));
        assert_eq!(
            open_as(&c, &key(1), ContentType::Result, &[]),
            Err(CryptoError::Authentication)
        );
    }

    #[test]
    fn context_is_bound() {
        let c = seal_with_context(b"x", &key(3), ContentType::Labels, b"model-a", [7; 12]);
        assert_eq!(open_as(&c, &key(3), ContentType::Labels, b"model-a").unwrap(), b"x");
        assert_eq!(
            open_as(&c, &key(3), ContentType::Labels, b"model-b"),
            Err(CryptoError::Authentication)
        );
    }

    #[test]
    fn framing_errors() {
        let bytes = seal(b"abc", &key(1), ContentType::Result).to_bytes();
        assert!(matches!(
            SealedContainer::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CryptoError::Framing(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            SealedContainer::from_bytes(&bad),
            Err(CryptoError::Framing(_))
        ));
        let mut bad_type = bytes;
        bad_type[8] = 99;
        assert!(matches!(
            SealedContainer::from_bytes(&bad_type),
            Err(CryptoError::Framing(_))
        ));
    }

    #[test]
    fn key_parsing() {
        let k = key(0xab);
        assert_eq!(SecretKey::from_hex(&k.to_hex()).unwrap(), k);
        assert!(SecretKey::from_hex("abcd").is_err());
        assert_eq!(format!("{k:?}"), "SecretKey(..)");
    }
}
