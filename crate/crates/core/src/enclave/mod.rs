//! Simulated trusted side of partitioned inference.
//!
//! An [`EnclaveSession`] holds the sealed FrontNet and labels, proves its
//! identity with a MAC over its measurement, accepts keys only through a
//! message bound to that attestation, and afterwards answers two requests:
//! sealed image in, IR out; top-k class indices in, sealed labelled result
//! out. Keys, plaintext weights, labels and images live in private fields
//! with no accessor, and no method returns them.
//!
//! Lifecycle: `Created -> Attested -> Provisioned -> Ready`. A failed
//! provisioning attempt moves the session to the terminal `Failed` state and
//! drops every secret it had installed.

mod boundary;

use hmac::{Hmac, Mac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;
use thiserror::Error;

use crate::crypto::{self, ContentType, CryptoError, SealedContainer, SecretKey};
use crate::nn::{forward_range, NetworkDef, Tensor};
use crate::partition::{decode_labels, decode_network_bundle, labels_context};

pub use boundary::{
    decode_map_request, decode_request, decode_response, encode_map_request, encode_request, encode_response,
    BoundaryRequest, BoundaryResponse, Enclave, ErrorCode,
};

/// Code identity folded into every measurement.
pub const CODE_IDENTITY: &[u8] = b"irshield-enclave/1";

const PROVISION_LABEL: &[u8] = b"irshield-provision/1";

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("{operation} not allowed in state {state:?}")]
    WrongState {
        operation: &'static str,
        state: SessionState,
    },
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("class index {index} outside 1..={classes}")]
    ClassIndex { index: usize, classes: usize },
    #[error("attestation rejected: {0}")]
    Attestation(String),
}

impl From<CryptoError> for EnclaveError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::Authentication => EnclaveError::Authentication("container did not verify".into()),
            other => EnclaveError::Malformed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Created,
    Attested,
    Provisioned,
    Ready,
    Failed,
}

/// Attestation evidence: `HMAC-SHA256(root, measurement || nonce)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub measurement: [u8; 32],
    pub nonce: [u8; 32],
    pub mac: [u8; 32],
}

impl Evidence {
    pub fn to_bytes(&self) -> Vec<u8> {
        [self.measurement, self.nonce, self.mac].concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 96 {
            return None;
        }
        Some(Evidence {
            measurement: bytes[..32].try_into().unwrap(),
            nonce: bytes[32..64].try_into().unwrap(),
            mac: bytes[64..].try_into().unwrap(),
        })
    }
}

/// Identity of an enclave loaded with these sealed artifacts.
pub fn measurement(frontnet: &SealedContainer, labels: &SealedContainer) -> [u8; 32] {
    let mut input = CODE_IDENTITY.to_vec();
    input.extend_from_slice(&crypto::sha256(&frontnet.to_bytes()));
    input.extend_from_slice(&crypto::sha256(&labels.to_bytes()));
    crypto::sha256(&input)
}

fn hmac(key: &SecretKey, parts: &[&[u8]]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC takes any key length");
    for p in parts {
        mac.update(p);
    }
    mac
}

pub fn evidence_mac(root_key: &SecretKey, measurement: &[u8; 32], nonce: &[u8; 32]) -> [u8; 32] {
    hmac(root_key, &[measurement, nonce]).finalize().into_bytes().into()
}

/// Client-side check of attestation evidence: right MAC under the shared
/// root key, the measurement the client expects, and its own fresh nonce.
pub fn verify_evidence(
    evidence: &Evidence,
    expected_measurement: &[u8; 32],
    expected_nonce: &[u8; 32],
    root_key: &SecretKey,
) -> Result<(), EnclaveError> {
    hmac(root_key, &[&evidence.measurement, &evidence.nonce])
        .verify_slice(&evidence.mac)
        .map_err(|_| EnclaveError::Attestation("evidence MAC does not verify".into()))?;
    if &evidence.nonce != expected_nonce {
        return Err(EnclaveError::Attestation("stale evidence: nonce mismatch".into()));
    }
    if &evidence.measurement != expected_measurement {
        return Err(EnclaveError::Attestation("unexpected enclave measurement".into()));
    }
    Ok(())
}

/// Transport key for the key-provisioning message, derived from the root
/// key and the attestation transcript.
pub fn provisioning_key(root_key: &SecretKey, measurement: &[u8; 32], nonce: &[u8; 32]) -> SecretKey {
    let bytes: [u8; 32] = hmac(root_key, &[PROVISION_LABEL, measurement, nonce])
        .finalize()
        .into_bytes()
        .into();
    SecretKey::from_bytes(bytes)
}

fn provisioning_context(measurement: &[u8; 32], nonce: &[u8; 32]) -> Vec<u8> {
    [&measurement[..], &nonce[..]].concat()
}

/// Builds the key-provisioning message for the enclave that produced
/// `evidence`. Call only after [`verify_evidence`] succeeded.
pub fn make_key_message(
    evidence: &Evidence,
    root_key: &SecretKey,
    model_key: &SecretKey,
    img_key: &SecretKey,
    nonce: [u8; crypto::NONCE_LEN],
) -> SealedContainer {
    let transport = provisioning_key(root_key, &evidence.measurement, &evidence.nonce);
    let payload = [&model_key.as_bytes()[..], &img_key.as_bytes()[..]].concat();
    crypto::seal_with_context(
        &payload,
        &transport,
        ContentType::Keys,
        &provisioning_context(&evidence.measurement, &evidence.nonce),
        nonce,
    )
}

/// Result plaintext: one `label<TAB>score` line per entry, scores printed in
/// shortest round-trip form.
pub fn encode_result(entries: &[(String, f32)]) -> Vec<u8> {
    entries
        .iter()
        .map(|(label, score)| format!("{label}\t{score}\n"))
        .collect::<String>()
        .into_bytes()
}

pub fn decode_result(bytes: &[u8]) -> Option<Vec<(String, f32)>> {
    let text = std::str::from_utf8(bytes).ok()?;
    text.lines()
        .map(|line| {
            let (label, score) = line.rsplit_once('\t')?;
            Some((label.to_string(), score.parse().ok()?))
        })
        .collect()
}

struct Secrets {
    img_key: SecretKey,
    frontnet: NetworkDef,
    labels: Vec<String>,
}

pub struct EnclaveSession {
    id: u64,
    measurement: [u8; 32],
    state: SessionState,
    frontnet_sealed: SealedContainer,
    labels_sealed: SealedContainer,
    transport: Option<(SecretKey, [u8; 32])>,
    secrets: Option<Secrets>,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for EnclaveSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnclaveSession")
            .field("id", &self.id)
            .field("measurement", &hex::encode(self.measurement))
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl EnclaveSession {
    /// Loads sealed artifacts without decrypting anything.
    pub fn create(frontnet: SealedContainer, labels: SealedContainer) -> Result<Self, EnclaveError> {
        Self::create_seeded(frontnet, labels, rand::rng().random())
    }

    /// Like [`create`](Self::create) with a fixed seed for result nonces and
    /// the session id, for reproducible transcripts.
    pub fn create_seeded(frontnet: SealedContainer, labels: SealedContainer, seed: u64) -> Result<Self, EnclaveError> {
        if frontnet.content_type != ContentType::FrontNet {
            return Err(EnclaveError::Malformed(format!(
                "expected a frontnet container, got {}",
                frontnet.content_type.name()
            )));
        }
        if labels.content_type != ContentType::Labels {
            return Err(EnclaveError::Malformed(format!(
                "expected a labels container, got {}",
                labels.content_type.name()
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Ok(EnclaveSession {
            id: rng.random(),
            measurement: measurement(&frontnet, &labels),
            state: SessionState::Created,
            frontnet_sealed: frontnet,
            labels_sealed: labels,
            transport: None,
            secrets: None,
            rng,
        })
    }

    /// Parses both containers from their byte encodings first.
    pub fn create_from_bytes(frontnet: &[u8], labels: &[u8]) -> Result<Self, EnclaveError> {
        Self::create(
            SealedContainer::from_bytes(frontnet)?,
            SealedContainer::from_bytes(labels)?,
        )
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn measurement(&self) -> [u8; 32] {
        self.measurement
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    fn require(&self, operation: &'static str, state: SessionState) -> Result<(), EnclaveError> {
        if self.state == state {
            Ok(())
        } else {
            Err(EnclaveError::WrongState {
                operation,
                state: self.state,
            })
        }
    }

    pub fn attest(&mut self, client_nonce: [u8; 32], root_key: &SecretKey) -> Result<Evidence, EnclaveError> {
        self.require("attest", SessionState::Created)?;
        let mac = evidence_mac(root_key, &self.measurement, &client_nonce);
        self.transport = Some((
            provisioning_key(root_key, &self.measurement, &client_nonce),
            client_nonce,
        ));
        self.state = SessionState::Attested;
        Ok(Evidence {
            measurement: self.measurement,
            nonce: client_nonce,
            mac,
        })
    }

    /// Installs the client's keys, then verifies and decrypts the FrontNet
    /// and labels. Any failure is terminal.
    pub fn provision_keys(&mut self, key_msg: &SealedContainer) -> Result<(), EnclaveError> {
        self.require("provision_keys", SessionState::Attested)?;
        match self.try_provision(key_msg) {
            Ok(()) => {
                self.state = SessionState::Ready;
                Ok(())
            }
            Err(e) => {
                self.secrets = None;
                self.transport = None;
                self.state = SessionState::Failed;
                Err(e)
            }
        }
    }

    fn try_provision(&mut self, key_msg: &SealedContainer) -> Result<(), EnclaveError> {
        let (transport, nonce) = self.transport.take().expect("attested session has a transport key");
        let context = provisioning_context(&self.measurement, &nonce);
        let keys = crypto::open_as(key_msg, &transport, ContentType::Keys, &context)
            .map_err(|_| EnclaveError::Authentication("key message did not verify".into()))?;
        if keys.len() != 64 {
            return Err(EnclaveError::Malformed(
                "key message must carry two 32-byte keys".into(),
            ));
        }
        let model_key = SecretKey::from_slice(&keys[..32])?;
        let img_key = SecretKey::from_slice(&keys[32..])?;
        self.state = SessionState::Provisioned;

        let bundle = crypto::open_as(&self.frontnet_sealed, &model_key, ContentType::FrontNet, &[])
            .map_err(|_| EnclaveError::Authentication("frontnet did not verify".into()))?;
        let labels = crypto::open_as(
            &self.labels_sealed,
            &model_key,
            ContentType::Labels,
            &labels_context(&self.frontnet_sealed),
        )
        .map_err(|_| EnclaveError::Authentication("labels did not verify".into()))?;
        let frontnet = decode_network_bundle(&bundle).map_err(|e| EnclaveError::Malformed(e.to_string()))?;
        let labels = decode_labels(&labels).ok_or_else(|| EnclaveError::Malformed("labels are not UTF-8".into()))?;
        self.secrets = Some(Secrets {
            img_key,
            frontnet,
            labels,
        });
        Ok(())
    }

    /// Decrypts an image and runs the FrontNet on it. Only the IR leaves.
    pub fn infer_encrypted_image(&mut self, img_sealed: &SealedContainer) -> Result<Tensor, EnclaveError> {
        self.require("infer_encrypted_image", SessionState::Ready)?;
        let secrets = self.secrets.as_ref().expect("ready session holds secrets");
        let plaintext = crypto::open_as(img_sealed, &secrets.img_key, ContentType::Image, &[])
            .map_err(|_| EnclaveError::Authentication("image did not verify".into()))?;
        let img = Tensor::from_bytes(&plaintext).map_err(|e| EnclaveError::Malformed(e.to_string()))?;
        let front = &secrets.frontnet;
        forward_range(front, 1, front.len(), &img).map_err(|e| EnclaveError::Malformed(e.to_string()))
    }

    /// Maps 1-based class indices to labels and seals the result under the
    /// client's image key.
    pub fn map_classes(&mut self, top: &[(usize, f32)]) -> Result<SealedContainer, EnclaveError> {
        self.require("map_classes", SessionState::Ready)?;
        let secrets = self.secrets.as_ref().expect("ready session holds secrets");
        let classes = secrets.labels.len();
        let entries = top
            .iter()
            .map(|&(index, score)| {
                if index == 0 || index > classes {
                    Err(EnclaveError::ClassIndex { index, classes })
                } else {
                    Ok((secrets.labels[index - 1].clone(), score))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let nonce = self.rng.random();
        Ok(crypto::seal_with_context(
            &encode_result(&entries),
            &secrets.img_key,
            ContentType::Result,
            &[],
            nonce,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_encoding_round_trips_scores() {
        let entries = vec![("dog".to_string(), 0.7f32), ("a b".to_string(), 1e-7)];
        assert_eq!(decode_result(&encode_result(&entries)).unwrap(), entries);
        assert_eq!(encode_result(&entries[..1]), b"dog\t0.7\n");
    }

    #[test]
    fn evidence_bytes() {
        let e = Evidence {
            measurement: [1; 32],
            nonce: [2; 32],
            mac: [3; 32],
        };
        assert_eq!(Evidence::from_bytes(&e.to_bytes()).unwrap(), e);
        assert!(Evidence::from_bytes(&[0; 95]).is_none());
    }

    #[test]
    fn wrong_root_key_rejected() {
        let root = SecretKey::from_bytes([9; 32]);
        let m = [4; 32];
        let n = [5; 32];
        let e = Evidence {
            measurement: m,
            nonce: n,
            mac: evidence_mac(&root, &m, &n),
        };
        assert!(verify_evidence(&e, &m, &n, &root).is_ok());
        assert!(verify_evidence(&e, &m, &n, &SecretKey::from_bytes([8; 32])).is_err());
        assert!(verify_evidence(&e, &m, &[6; 32], &root).is_err());
        assert!(verify_evidence(&e, &[0; 32], &n, &root).is_err());
    }
}
