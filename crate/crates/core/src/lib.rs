//! Partitioned ConvNet inference with a simulated trusted-enclave boundary.
//!
//! A model is split into a FrontNet (run inside the enclave on decrypted
//! inputs), a BackNet (run by the untrusted host on the intermediate
//! representation) and an in-enclave class-label mapping. The [`assessment`]
//! module picks the earliest safe cut by comparing the oracle classification of
//! projected feature maps against the input's own classification.

pub mod assessment;
pub mod audit;
pub mod cli;
pub mod crypto;
pub mod enclave;
pub mod image;
pub mod nn;
pub mod partition;
pub mod serving;
pub mod workload;
