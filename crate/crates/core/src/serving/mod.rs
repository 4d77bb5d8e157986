//! Untrusted host daemon and client.
//!
//! Connection flow, one enclave session per connection:
//!
//! ```text
//! client                         host                        enclave
//! Hello            ─────────▶
//!                  ◀───────── Hello(k, input shape)
//! AttestRequest(n) ─────────▶    attest(n) ───────────────▶
//!                  ◀───────── AttestEvidence
//! ProvisionKeys    ─────────▶    provision ───────────────▶
//!                  ◀───────── ProvisionKeys (empty ack)
//! Predict(img)     ─────────▶    infer ──▶ IR, BackNet, top-k, map ──▶
//!                  ◀───────── Result(sealed)
//! ```

mod client;
mod deploy;
mod server;
pub mod wire;

pub use client::{client_predict, Client, ClientError, ClientKeys, ClientSession};
pub use deploy::{deploy, handle_predict, DeployError, Deployment, PredictError};
pub use server::{serve, serve_connection, Connection, Reply, Server, IDLE_TIMEOUT};
pub use wire::{read_message, write_message, MessageType, ServerHello, WireError, WireMessage, MAX_PAYLOAD};
