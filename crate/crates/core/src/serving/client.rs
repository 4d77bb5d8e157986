use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::assessment::fit_to_shape;
use crate::audit::Tap;
use crate::crypto::{self, ContentType, SealedContainer, SecretKey};
use crate::enclave::{decode_result, make_key_message, verify_evidence, EnclaveError, Evidence};
use crate::image::{load_image, ImageError};
use crate::nn::{Shape, Tensor};

use super::wire::{read_message, write_message, MessageType, ServerHello, WireError, WireMessage};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Wire(#[from] WireError),
    #[error("attestation failed: {0}")]
    Attestation(#[from] EnclaveError),
    #[error("server error {code}: {message}")]
    Server { code: u16, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("result container failed authentication")]
    ResultAuthentication,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image {actual} cannot be fitted to the model input {expected}")]
    Shape { expected: Shape, actual: Shape },
}

impl From<std::io::Error> for ClientError {
    fn from(e: std::io::Error) -> Self {
        ClientError::Wire(WireError::Io(e))
    }
}

/// The two keys a client provisions into the enclave.
#[derive(Debug, Clone)]
pub struct ClientKeys {
    pub model_key: SecretKey,
    pub img_key: SecretKey,
}

/// Client configuration. Reusable: every [`connect`](Client::connect) starts
/// a fresh session, so a dropped connection leaves nothing to clean up.
pub struct Client {
    keys: ClientKeys,
    root_key: SecretKey,
    expected_measurement: [u8; 32],
    rng: ChaCha20Rng,
    transcript: Option<Tap>,
}

impl Client {
    pub fn new(keys: ClientKeys, root_key: SecretKey, expected_measurement: [u8; 32]) -> Self {
        Client {
            keys,
            root_key,
            expected_measurement,
            rng: ChaCha20Rng::from_os_rng(),
            transcript: None,
        }
    }

    /// Draws attestation and sealing nonces from a seeded generator.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = ChaCha20Rng::seed_from_u64(seed);
        self
    }

    /// Records every frame sent and received.
    pub fn with_transcript(mut self, tap: Tap) -> Self {
        self.transcript = Some(tap);
        self
    }

    pub fn connect<A: ToSocketAddrs>(&mut self, addr: A) -> Result<ClientSession<'_, TcpStream>, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        self.handshake(stream)
    }

    /// Hello, attestation check, then key provisioning. Keys are sent only
    /// after the evidence verifies.
    pub fn handshake<S: Read + Write>(&mut self, stream: S) -> Result<ClientSession<'_, S>, ClientError> {
        let mut session = ClientSession {
            client: self,
            stream,
            k: 0,
            input_shape: Shape::new(0, 0, 0),
        };
        let hello = session.exchange(WireMessage::new(MessageType::Hello, Vec::new()), MessageType::Hello)?;
        let hello = ServerHello::from_payload(&hello.payload)
            .ok_or_else(|| ClientError::Protocol("bad server hello".into()))?;
        session.k = hello.k;
        session.input_shape = hello.input_shape;

        let nonce: [u8; 32] = session.client.rng.random();
        let reply = session.exchange(
            WireMessage::new(MessageType::AttestRequest, nonce.to_vec()),
            MessageType::AttestEvidence,
        )?;
        let evidence =
            Evidence::from_bytes(&reply.payload).ok_or_else(|| ClientError::Protocol("bad evidence".into()))?;
        let c = &mut session.client;
        verify_evidence(&evidence, &c.expected_measurement, &nonce, &c.root_key)?;

        let key_msg = make_key_message(
            &evidence,
            &c.root_key,
            &c.keys.model_key,
            &c.keys.img_key,
            c.rng.random(),
        );
        session.exchange(
            WireMessage::new(MessageType::ProvisionKeys, key_msg.to_bytes()),
            MessageType::ProvisionKeys,
        )?;
        Ok(session)
    }
}

/// An attested, provisioned connection.
pub struct ClientSession<'c, S: Read + Write> {
    client: &'c mut Client,
    stream: S,
    k: usize,
    input_shape: Shape,
}

impl<S: Read + Write> ClientSession<'_, S> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    fn exchange(&mut self, msg: WireMessage, expect: MessageType) -> Result<WireMessage, ClientError> {
        if let Some(tap) = &self.client.transcript {
            tap.record(&msg.to_bytes());
        }
        write_message(&mut self.stream, &msg)?;
        let reply = read_message(&mut self.stream)?;
        if let Some(tap) = &self.client.transcript {
            tap.record(&reply.to_bytes());
        }
        if let Some((code, message)) = reply.error_parts() {
            return Err(ClientError::Server { code, message });
        }
        if reply.kind != expect {
            return Err(ClientError::Protocol(format!(
                "expected {expect:?}, got {:?}",
                reply.kind
            )));
        }
        Ok(reply)
    }

    /// Sends an already sealed image and returns the sealed result.
    pub fn predict_sealed(&mut self, img: &SealedContainer) -> Result<SealedContainer, ClientError> {
        let reply = self.exchange(
            WireMessage::new(MessageType::Predict, img.to_bytes()),
            MessageType::Result,
        )?;
        SealedContainer::from_bytes(&reply.payload).map_err(|_| ClientError::ResultAuthentication)
    }

    pub fn seal_image(&mut self, x: &Tensor) -> Result<SealedContainer, ClientError> {
        let fitted = fit_to_shape(x, self.input_shape).ok_or(ClientError::Shape {
            expected: self.input_shape,
            actual: x.shape(),
        })?;
        let nonce = self.client.rng.random();
        Ok(crypto::seal_with_context(
            &fitted.to_bytes(),
            &self.client.keys.img_key,
            ContentType::Image,
            &[],
            nonce,
        ))
    }

    pub fn open_result(&self, c: &SealedContainer) -> Result<Vec<(String, f32)>, ClientError> {
        let plain = crypto::open_as(c, &self.client.keys.img_key, ContentType::Result, &[])
            .map_err(|_| ClientError::ResultAuthentication)?;
        decode_result(&plain).ok_or(ClientError::ResultAuthentication)
    }

    /// Seals `x`, predicts, and opens the result.
    pub fn predict(&mut self, x: &Tensor) -> Result<Vec<(String, f32)>, ClientError> {
        let sealed = self.seal_image(x)?;
        let result = self.predict_sealed(&sealed)?;
        self.open_result(&result)
    }
}

/// One-shot prediction: connect, attest, provision, predict the image at
/// `image_path`, and keep the best `k` entries.
pub fn client_predict<A: ToSocketAddrs>(
    server_addr: A,
    image_path: &Path,
    keys: &ClientKeys,
    root_key: &SecretKey,
    expected_measurement: [u8; 32],
    k: usize,
) -> Result<Vec<(String, f32)>, ClientError> {
    let x = load_image(image_path)?;
    let mut client = Client::new(keys.clone(), root_key.clone(), expected_measurement);
    let mut session = client.connect(server_addr)?;
    let mut result = session.predict(&x)?;
    result.truncate(k);
    Ok(result)
}
