use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use crate::crypto::SealedContainer;
use crate::enclave::{decode_response, encode_request, BoundaryRequest, BoundaryResponse, Enclave, ErrorCode};

use super::deploy::{handle_predict, Deployment};
use super::wire::{read_message, write_message, MessageType, ServerHello, WireError, WireMessage};

/// Idle connections are dropped after this long without a frame.
pub const IDLE_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitHello,
    AwaitAttest,
    AwaitKeys,
    Ready,
}

pub struct Reply {
    pub message: WireMessage,
    pub close: bool,
}

impl Reply {
    fn ok(message: WireMessage) -> Self {
        Reply { message, close: false }
    }

    fn error(code: ErrorCode, text: &str) -> Self {
        Reply {
            message: WireMessage::error(code, text),
            close: false,
        }
    }

    fn fatal(code: ErrorCode, text: &str) -> Self {
        Reply {
            message: WireMessage::error(code, text),
            close: true,
        }
    }
}

/// Per-connection protocol state, each with its own enclave session:
/// `Hello -> AttestRequest -> ProvisionKeys -> Predict*`.
pub struct Connection<'a> {
    dep: &'a Deployment,
    enclave: Enclave,
    phase: Phase,
}

impl<'a> Connection<'a> {
    pub fn new(dep: &'a Deployment) -> Self {
        Connection {
            dep,
            enclave: dep.launch_enclave(),
            phase: Phase::AwaitHello,
        }
    }

    fn ecall(&mut self, req: &BoundaryRequest) -> BoundaryResponse {
        decode_response(&self.enclave.ecall(&encode_request(req)))
            .unwrap_or(BoundaryResponse::Error(ErrorCode::Internal as u16))
    }

    pub fn handle(&mut self, msg: &WireMessage) -> Reply {
        use MessageType::*;
        match (self.phase, msg.kind) {
            (Phase::AwaitHello, Hello) => {
                self.phase = Phase::AwaitAttest;
                let hello = ServerHello {
                    k: self.dep.k(),
                    input_shape: self.dep.plan().input_shape,
                };
                Reply::ok(WireMessage::new(Hello, hello.to_payload()))
            }
            (Phase::AwaitAttest, AttestRequest) => {
                let Ok(nonce) = <[u8; 32]>::try_from(msg.payload.as_slice()) else {
                    return Reply::error(ErrorCode::Malformed, "attestation nonce must be 32 bytes");
                };
                match self.ecall(&BoundaryRequest::Attest(nonce)) {
                    BoundaryResponse::Evidence(e) => {
                        self.phase = Phase::AwaitKeys;
                        Reply::ok(WireMessage::new(AttestEvidence, e.to_bytes()))
                    }
                    _ => Reply::fatal(ErrorCode::Internal, "attestation failed"),
                }
            }
            (Phase::AwaitKeys, ProvisionKeys) => {
                let Ok(key_msg) = SealedContainer::from_bytes(&msg.payload) else {
                    return Reply::error(ErrorCode::Malformed, "key message is not a sealed container");
                };
                match self.ecall(&BoundaryRequest::Provision(key_msg)) {
                    BoundaryResponse::Provisioned => {
                        self.phase = Phase::Ready;
                        Reply::ok(WireMessage::new(ProvisionKeys, Vec::new()))
                    }
                    // A failed provisioning attempt is terminal for the session.
                    BoundaryResponse::Error(code) => Reply::fatal(
                        ErrorCode::from_u16(code).unwrap_or(ErrorCode::Internal),
                        "key provisioning rejected",
                    ),
                    _ => Reply::fatal(ErrorCode::Internal, "key provisioning failed"),
                }
            }
            (Phase::Ready, Predict) => {
                let Ok(img) = SealedContainer::from_bytes(&msg.payload) else {
                    return Reply::error(ErrorCode::Malformed, "image is not a sealed container");
                };
                match handle_predict(self.dep, &mut self.enclave, &img) {
                    Ok(result) => Reply::ok(WireMessage::new(Result, result.to_bytes())),
                    Err(e) => Reply::error(e.code(), &e.to_string()),
                }
            }
            (_, Hello | AttestRequest | ProvisionKeys | Predict) => {
                Reply::error(ErrorCode::NotReady, &format!("{:?} not expected now", msg.kind))
            }
            (_, AttestEvidence | Result | Error) => Reply::fatal(
                ErrorCode::Malformed,
                &format!("{:?} is a server-only message", msg.kind),
            ),
        }
    }
}

/// Runs the protocol over any byte stream until the peer disconnects or a
/// frame forces the connection closed.
pub fn serve_connection<S: Read + Write>(dep: &Deployment, stream: &mut S) {
    let mut conn = Connection::new(dep);
    let record = |bytes: &[u8]| {
        if let Some(tap) = dep.tap() {
            tap.record(bytes);
        }
    };
    loop {
        let reply = match read_message(stream) {
            Ok(msg) => {
                record(&msg.to_bytes());
                conn.handle(&msg)
            }
            Err(WireError::Closed) => return,
            Err(WireError::Io(e)) => {
                debug!("connection dropped: {e}");
                return;
            }
            Err(WireError::TooLarge(n)) => Reply::fatal(ErrorCode::TooLarge, &format!("payload of {n} bytes")),
            Err(e @ WireError::UnknownType(_)) => Reply::fatal(ErrorCode::Malformed, &e.to_string()),
        };
        let bytes = reply.message.to_bytes();
        record(&bytes);
        if let Err(e) = write_message(stream, &reply.message) {
            debug!("write failed: {e}");
            return;
        }
        if reply.close {
            return;
        }
    }
}

/// Handle to a running daemon.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` and serves in background threads, one per connection.
    pub fn spawn<A: ToSocketAddrs>(addr: A, dep: Deployment) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let dep = Arc::new(dep);
        let flag = stop.clone();
        let accept = thread::spawn(move || accept_loop(listener, dep, flag));
        info!("listening on {addr}");
        Ok(Server {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; connections already open run to completion.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn accept_loop(listener: TcpListener, dep: Arc<Deployment>, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let mut stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let dep = dep.clone();
        thread::spawn(move || {
            let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
            let _ = stream.set_nodelay(true);
            serve_connection(&dep, &mut stream);
        });
    }
}

/// Serves `dep` on `addr` until the process exits.
pub fn serve<A: ToSocketAddrs>(addr: A, dep: Deployment) -> io::Result<()> {
    Server::spawn(addr, dep)?.wait();
    Ok(())
}
