use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::audit::Tap;
use crate::crypto::{SealedContainer, SecretKey};
use crate::enclave::{
    decode_response, encode_request, BoundaryRequest, BoundaryResponse, Enclave, EnclaveError, EnclaveSession,
    ErrorCode,
};
use crate::nn::{forward, top_k, NetworkDef, NnError};
use crate::partition::{PartitionArtifacts, PartitionError, PartitionPlan};

#[derive(Debug, Error)]
pub enum DeployError {
    #[error(transparent)]
    Artifacts(#[from] PartitionError),
    #[error("cannot load backnet: {0}")]
    BackNet(#[from] NnError),
    #[error("backnet input {backnet} does not match the frontnet output {ir}")]
    ShapeMismatch { backnet: String, ir: String },
    #[error("k = {k} must be within 1..={classes}")]
    TopK { k: usize, classes: usize },
    #[error("enclave rejected the sealed artifacts: {0}")]
    Enclave(#[from] EnclaveError),
}

/// Failure of one prediction; carries only what the host itself observed.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredictError {
    #[error("enclave denied the request ({})", .0.name())]
    Denied(ErrorCode),
    #[error("backnet inference failed: {0}")]
    BackNet(String),
    #[error("unexpected enclave response")]
    Protocol,
}

impl PredictError {
    pub fn code(&self) -> ErrorCode {
        match self {
            PredictError::Denied(code) => *code,
            PredictError::BackNet(_) => ErrorCode::Malformed,
            PredictError::Protocol => ErrorCode::Internal,
        }
    }
}

/// A loaded artifact set: sealed FrontNet and labels for the enclave, the
/// plaintext BackNet for the host, and the deployment's top-k size.
pub struct Deployment {
    artifacts: PartitionArtifacts,
    backnet: NetworkDef,
    k: usize,
    root_key: SecretKey,
    tap: Option<Tap>,
    session_seed: Option<AtomicU64>,
}

impl std::fmt::Debug for Deployment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Deployment")
            .field("plan", &self.artifacts.plan)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

/// Loads and checks an artifact directory. `root_key` is the attestation root
/// the launched enclaves hold.
pub fn deploy(model_dir: &Path, k: usize, root_key: SecretKey) -> Result<Deployment, DeployError> {
    Deployment::from_artifacts(PartitionArtifacts::read_from_dir(model_dir)?, k, root_key)
}

impl Deployment {
    pub fn from_artifacts(artifacts: PartitionArtifacts, k: usize, root_key: SecretKey) -> Result<Self, DeployError> {
        let backnet = artifacts.backnet()?;
        let ir = artifacts.plan.ir_shape;
        if backnet.input_shape() != ir {
            return Err(DeployError::ShapeMismatch {
                backnet: backnet.input_shape().to_string(),
                ir: ir.to_string(),
            });
        }
        let classes = backnet.config().output_shape().len();
        if k == 0 || k > classes {
            return Err(DeployError::TopK { k, classes });
        }
        // Catches mismatched container types before any client connects.
        EnclaveSession::create_seeded(artifacts.frontnet.clone(), artifacts.labels.clone(), 0)?;
        Ok(Deployment {
            artifacts,
            backnet,
            k,
            root_key,
            tap: None,
            session_seed: None,
        })
    }

    /// Records every host-visible buffer (wire frames and enclave traffic).
    pub fn with_tap(mut self, tap: Tap) -> Self {
        self.tap = Some(tap);
        self
    }

    /// Seeds enclave sessions deterministically: the n-th session launched
    /// uses `seed + n`.
    pub fn with_session_seed(mut self, seed: u64) -> Self {
        self.session_seed = Some(AtomicU64::new(seed));
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.artifacts.plan
    }

    pub fn backnet(&self) -> &NetworkDef {
        &self.backnet
    }

    pub fn tap(&self) -> Option<&Tap> {
        self.tap.as_ref()
    }

    pub fn measurement(&self) -> [u8; 32] {
        crate::enclave::measurement(&self.artifacts.frontnet, &self.artifacts.labels)
    }

    /// Launches a fresh enclave over the deployment's sealed artifacts.
    pub fn launch_enclave(&self) -> Enclave {
        let (fn_sealed, lbl_sealed) = (self.artifacts.frontnet.clone(), self.artifacts.labels.clone());
        let session = match &self.session_seed {
            Some(seed) => EnclaveSession::create_seeded(fn_sealed, lbl_sealed, seed.fetch_add(1, Ordering::SeqCst)),
            None => EnclaveSession::create(fn_sealed, lbl_sealed),
        }
        .expect("container types checked at deploy time");
        let enclave = Enclave::launch(session, self.root_key.clone());
        match &self.tap {
            Some(tap) => enclave.with_tap(tap.clone()),
            None => enclave,
        }
    }
}

fn ecall(enclave: &mut Enclave, req: &BoundaryRequest) -> Result<BoundaryResponse, PredictError> {
    let resp = decode_response(&enclave.ecall(&encode_request(req))).map_err(|_| PredictError::Protocol)?;
    match resp {
        BoundaryResponse::Error(code) => Err(PredictError::Denied(
            ErrorCode::from_u16(code).unwrap_or(ErrorCode::Internal),
        )),
        other => Ok(other),
    }
}

/// Host side of one prediction: IR from the enclave, BackNet and top-k on the
/// host, labels and sealing back in the enclave.
pub fn handle_predict(
    dep: &Deployment,
    enclave: &mut Enclave,
    img_sealed: &SealedContainer,
) -> Result<SealedContainer, PredictError> {
    let ir = match ecall(enclave, &BoundaryRequest::Infer(img_sealed.clone()))? {
        BoundaryResponse::Ir(t) => t,
        _ => return Err(PredictError::Protocol),
    };
    let pv = forward(&dep.backnet, &ir).map_err(|e| PredictError::BackNet(e.to_string()))?;
    let top = top_k(&pv, dep.k).map_err(|e| PredictError::BackNet(e.to_string()))?;
    match ecall(enclave, &BoundaryRequest::MapClasses(top))? {
        BoundaryResponse::Result(c) => Ok(c),
        _ => Err(PredictError::Protocol),
    }
}
