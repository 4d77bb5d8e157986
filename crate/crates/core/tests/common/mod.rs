#![allow(dead_code)]

use std::path::PathBuf;

use irshield_core::crypto::SecretKey;
use irshield_core::nn::{
    fixture_image, fixture_labels, gen_fixture_model, parse_network, FixtureArch, NetworkDef, Tensor,
};
use irshield_core::partition::{partition_model_with_rng, PartitionArtifacts};
use irshield_core::serving::{ClientKeys, Deployment};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const CLASSES: usize = 10;

pub fn fixture(arch: FixtureArch, seed: u64) -> NetworkDef {
    let (cfg, weights) = gen_fixture_model(arch, seed, CLASSES);
    parse_network(&cfg, &weights).expect("fixture parses")
}

pub fn image(arch: FixtureArch, seed: u64) -> Tensor {
    fixture_image(arch.input_shape(), seed)
}

pub fn key(tag: u64) -> SecretKey {
    SecretKey::generate(&mut ChaCha20Rng::seed_from_u64(tag))
}

/// A partitioned fixture with its owner-side secrets.
pub struct Scenario {
    pub arch: FixtureArch,
    pub net: NetworkDef,
    pub labels: Vec<String>,
    pub cut: usize,
    pub keys: ClientKeys,
    pub root: SecretKey,
    pub artifacts: PartitionArtifacts,
}

pub fn scenario(arch: FixtureArch, seed: u64, cut: usize) -> Scenario {
    let net = fixture(arch, seed);
    let labels = fixture_labels(CLASSES);
    let keys = ClientKeys {
        model_key: key(seed * 10 + 1),
        img_key: key(seed * 10 + 2),
    };
    let root = key(seed * 10 + 3);
    let mut rng = ChaCha20Rng::seed_from_u64(seed * 10 + 4);
    let artifacts = partition_model_with_rng(&net, cut, &labels, &keys.model_key, &mut rng).expect("valid cut");
    Scenario {
        arch,
        net,
        labels,
        cut,
        keys,
        root,
        artifacts,
    }
}

impl Scenario {
    pub fn deployment(&self, k: usize) -> Deployment {
        Deployment::from_artifacts(self.artifacts.clone(), k, self.root.clone()).expect("deployable")
    }

    pub fn measurement(&self) -> [u8; 32] {
        irshield_core::enclave::measurement(&self.artifacts.frontnet, &self.artifacts.labels)
    }
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

/// Compares `actual` with a frozen golden file. Set `IRSHIELD_BLESS=1` to
/// (re)write it.
pub fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("IRSHIELD_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with IRSHIELD_BLESS=1 to create)", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}
