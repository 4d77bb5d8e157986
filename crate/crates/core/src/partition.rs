//! Splitting a model into FrontNet and BackNet, and the on-disk artifact set
//! a model owner hands to the serving host.
//!
//! Artifact directory layout:
//!
//! | file              | contents                                             |
//! |-------------------|------------------------------------------------------|
//! | `frontnet.irsc`   | sealed FrontNet bundle (config + weights), model key |
//! | `labels.irsc`     | sealed class labels, model key, bound to the FrontNet |
//! | `backnet.cfg`     | plaintext BackNet config, routes rebased locally      |
//! | `backnet.weights` | plaintext BackNet `IRSW` weights                      |
//! | `plan.txt`        | cut index and shapes in original layer numbering      |
//! | `manifest.tsv`    | `name<TAB>sha256-hex` for each file above             |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{CryptoRng, Rng};
use thiserror::Error;

use crate::assessment::valid_partition_points;
use crate::crypto::{self, ContentType, CryptoError, SealedContainer, SecretKey};
use crate::nn::{parse_network, LayerKind, ModelConfig, NetworkDef, NnError, Shape};

pub const FRONTNET_FILE: &str = "frontnet.irsc";
pub const LABELS_FILE: &str = "labels.irsc";
pub const BACKNET_CONFIG_FILE: &str = "backnet.cfg";
pub const BACKNET_WEIGHTS_FILE: &str = "backnet.weights";
pub const PLAN_FILE: &str = "plan.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";

const ARTIFACT_FILES: [&str; 5] = [
    FRONTNET_FILE,
    LABELS_FILE,
    BACKNET_CONFIG_FILE,
    BACKNET_WEIGHTS_FILE,
    PLAN_FILE,
];

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("cut {cut} is not a valid partition point: {reason}")]
    InvalidCut { cut: usize, reason: String },
    #[error("{labels} labels supplied for a model with {classes} classes")]
    LabelCount { labels: usize, classes: usize },
    #[error("missing artifact {0}")]
    MissingArtifact(String),
    #[error("manifest hash mismatch for {0}")]
    ManifestMismatch(String),
    #[error("malformed {file}: {message}")]
    Malformed { file: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Splits `net` after layer `cut` into FrontNet (layers `1..=cut`) and
/// BackNet (layers `cut+1..=n`, route sources rebased so that 0 names the IR).
pub fn split_network(net: &NetworkDef, cut: usize) -> Result<(NetworkDef, NetworkDef), PartitionError> {
    if !valid_partition_points(net).contains(&cut) {
        let reason = match net.check_range(cut + 1, net.len()) {
            Err(e) => e.to_string(),
            Ok(()) => format!("cuts must lie in 1..{}", net.len()),
        };
        return Err(PartitionError::InvalidCut { cut, reason });
    }
    let config = net.config();
    let kinds = config.kinds();
    let front_cfg = ModelConfig::new(config.input_shape(), kinds[..cut].to_vec())?;
    let back_kinds = kinds[cut..]
        .iter()
        .map(|k| match k {
            LayerKind::Route(sources) => LayerKind::Route(sources.iter().map(|s| s - cut).collect()),
            other => other.clone(),
        })
        .collect();
    let back_cfg = ModelConfig::new(config.output_of(cut), back_kinds)?;
    let front = NetworkDef::new(front_cfg, net.weights()[..cut].to_vec())?;
    let back = NetworkDef::new(back_cfg, net.weights()[cut..].to_vec())?;
    Ok((front, back))
}

/// Inverse of [`split_network`].
pub fn join_networks(front: &NetworkDef, back: &NetworkDef) -> Result<NetworkDef, NnError> {
    let cut = front.len();
    let mut kinds = front.config().kinds();
    kinds.extend(back.config().kinds().into_iter().map(|k| match k {
        LayerKind::Route(sources) => LayerKind::Route(sources.into_iter().map(|s| s + cut).collect()),
        other => other,
    }));
    let config = ModelConfig::new(front.input_shape(), kinds)?;
    let mut weights = front.weights().to_vec();
    weights.extend_from_slice(back.weights());
    NetworkDef::new(config, weights)
}

/// FrontNet plaintext: config length u64 LE | config text | weights file.
pub fn encode_network_bundle(net: &NetworkDef) -> Vec<u8> {
    let cfg = net.to_config_text();
    let mut out = Vec::new();
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&net.to_weights_bytes());
    out
}

pub fn decode_network_bundle(bytes: &[u8]) -> Result<NetworkDef, NnError> {
    let malformed = |m: &str| NnError::Syntax {
        line: 0,
        message: format!("network bundle: {m}"),
    };
    if bytes.len() < 8 {
        return Err(malformed("truncated header"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= bytes.len() - 8)
        .ok_or_else(|| malformed("config length exceeds bundle"))?;
    let cfg = std::str::from_utf8(&bytes[8..8 + len]).map_err(|_| malformed("config is not UTF-8"))?;
    parse_network(cfg, &bytes[8 + len..])
}

pub fn encode_labels(labels: &[String]) -> Vec<u8> {
    labels.join("\n").into_bytes()
}

pub fn decode_labels(bytes: &[u8]) -> Option<Vec<String>> {
    let text = std::str::from_utf8(bytes).ok()?;
    if text.is_empty() {
        return Some(Vec::new());
    }
    Some(text.split('\n').map(str::to_string).collect())
}

/// Cut metadata kept in original layer numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub cut: usize,
    pub layers: usize,
    pub input_shape: Shape,
    pub ir_shape: Shape,
    pub classes: usize,
}

fn shape_text(s: Shape) -> String {
    format!("{}x{}x{}", s.width, s.height, s.channels)
}

fn parse_shape(text: &str) -> Option<Shape> {
    let dims: Vec<usize> = text.split('x').map(|d| d.parse().ok()).collect::<Option<_>>()?;
    match dims[..] {
        [w, h, c] => Some(Shape::new(w, h, c)),
        _ => None,
    }
}

impl PartitionPlan {
    pub fn to_text(&self) -> String {
        format!(
            "cut={}\nlayers={}\ninput_shape={}\nir_shape={}\nclasses={}\n",
            self.cut,
            self.layers,
            shape_text(self.input_shape),
            shape_text(self.ir_shape),
            self.classes
        )
    }

    pub fn parse(text: &str) -> Result<Self, PartitionError> {
        let malformed = |message: String| PartitionError::Malformed {
            file: PLAN_FILE.into(),
            message,
        };
        let mut fields = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("bad line `{line}`")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| malformed(format!("missing `{k}`")))
        };
        let num = |k: &str| {
            get(k)?
                .parse::<usize>()
                .map_err(|_| malformed(format!("`{k}` is not an integer")))
        };
        let shape = |k: &str| parse_shape(get(k)?).ok_or_else(|| malformed(format!("`{k}` is not WxHxC")));
        Ok(PartitionPlan {
            cut: num("cut")?,
            layers: num("layers")?,
            input_shape: shape("input_shape")?,
            ir_shape: shape("ir_shape")?,
            classes: num("classes")?,
        })
    }
}

/// Everything the host receives: two sealed containers, the plaintext
/// BackNet and the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionArtifacts {
    pub frontnet: SealedContainer,
    pub labels: SealedContainer,
    pub backnet_config: String,
    pub backnet_weights: Vec<u8>,
    pub plan: PartitionPlan,
}

/// Associated data binding a labels container to its FrontNet container.
pub fn labels_context(frontnet: &SealedContainer) -> [u8; 32] {
    crypto::sha256(&frontnet.to_bytes())
}

/// Splits `net` at `cut` and seals the FrontNet and labels under `model_key`.
pub fn partition_model(
    net: &NetworkDef,
    cut: usize,
    labels: &[String],
    model_key: &SecretKey,
) -> Result<PartitionArtifacts, PartitionError> {
    partition_model_with_rng(net, cut, labels, model_key, &mut rand::rng())
}

/// [`partition_model`] drawing container nonces from `rng`.
pub fn partition_model_with_rng<R: Rng + CryptoRng>(
    net: &NetworkDef,
    cut: usize,
    labels: &[String],
    model_key: &SecretKey,
    rng: &mut R,
) -> Result<PartitionArtifacts, PartitionError> {
    let classes = net.config().output_shape().len();
    if labels.len() != classes {
        return Err(PartitionError::LabelCount {
            labels: labels.len(),
            classes,
        });
    }
    let (front, back) = split_network(net, cut)?;
    let frontnet = crypto::seal_with_context(
        &encode_network_bundle(&front),
        model_key,
        ContentType::FrontNet,
        &[],
        rng.random(),
    );
    let labels = crypto::seal_with_context(
        &encode_labels(labels),
        model_key,
        ContentType::Labels,
        &labels_context(&frontnet),
        rng.random(),
    );
    Ok(PartitionArtifacts {
        frontnet,
        labels,
        backnet_config: back.to_config_text(),
        backnet_weights: back.to_weights_bytes(),
        plan: PartitionPlan {
            cut,
            layers: net.len(),
            input_shape: net.input_shape(),
            ir_shape: front.config().output_shape(),
            classes,
        },
    })
}

impl PartitionArtifacts {
    fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        vec![
            (FRONTNET_FILE, self.frontnet.to_bytes()),
            (LABELS_FILE, self.labels.to_bytes()),
            (BACKNET_CONFIG_FILE, self.backnet_config.as_bytes().to_vec()),
            (BACKNET_WEIGHTS_FILE, self.backnet_weights.clone()),
            (PLAN_FILE, self.plan.to_text().into_bytes()),
        ]
    }

    pub fn manifest(&self) -> String {
        self.files()
            .iter()
            .map(|(name, bytes)| format!("{name}\t{}\n", crypto::sha256_hex(bytes)))
            .collect()
    }

    pub fn backnet(&self) -> Result<NetworkDef, NnError> {
        parse_network(&self.backnet_config, &self.backnet_weights)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<(), PartitionError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PartitionError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, bytes) in self.files() {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest()).map_err(io(&path))
    }

    /// Loads an artifact directory, checking every file against the manifest.
    pub fn read_from_dir(dir: &Path) -> Result<Self, PartitionError> {
        let read = |name: &str| -> Result<Vec<u8>, PartitionError> {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => PartitionError::MissingArtifact(path.display().to_string()),
                _ => PartitionError::Io {
                    path: path.display().to_string(),
                    source,
                },
            })
        };
        let manifest_bytes = read(MANIFEST_FILE)?;
        let manifest = String::from_utf8(manifest_bytes).map_err(|_| PartitionError::Malformed {
            file: MANIFEST_FILE.into(),
            message: "not UTF-8".into(),
        })?;
        let mut expected = BTreeMap::new();
        for line in manifest.lines().filter(|l| !l.is_empty()) {
            let (name, digest) = line.split_once('\t').ok_or_else(|| PartitionError::Malformed {
                file: MANIFEST_FILE.into(),
                message: format!("bad line `{line}`"),
            })?;
            expected.insert(name.to_string(), digest.to_string());
        }
        let mut contents = BTreeMap::new();
        for name in ARTIFACT_FILES {
            let digest = expected
                .get(name)
                .ok_or_else(|| PartitionError::MissingArtifact(format!("{name} (not in manifest)")))?;
            let bytes = read(name)?;
            if &crypto::sha256_hex(&bytes) != digest {
                return Err(PartitionError::ManifestMismatch(name.into()));
            }
            contents.insert(name, bytes);
        }
        let mut take = |name: &str| contents.remove(name).expect("read above");
        let text = |name: &'static str, bytes: Vec<u8>| {
            String::from_utf8(bytes).map_err(|_| PartitionError::Malformed {
                file: name.into(),
                message: "not UTF-8".into(),
            })
        };
        Ok(PartitionArtifacts {
            frontnet: SealedContainer::from_bytes(&take(FRONTNET_FILE))?,
            labels: SealedContainer::from_bytes(&take(LABELS_FILE))?,
            backnet_config: text(BACKNET_CONFIG_FILE, take(BACKNET_CONFIG_FILE))?,
            backnet_weights: take(BACKNET_WEIGHTS_FILE),
            plan: PartitionPlan::parse(&text(PLAN_FILE, take(PLAN_FILE))?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{fixture_labels, gen_fixture_model, FixtureArch};

    fn fixture(arch: FixtureArch) -> NetworkDef {
        let (cfg, w) = gen_fixture_model(arch, 42, 10);
        parse_network(&cfg, &w).unwrap()
    }

    #[test]
    fn split_shapes() {
        let net = fixture(FixtureArch::Plain17);
        let (front, back) = split_network(&net, 4).unwrap();
        assert_eq!(front.len(), 4);
        assert_eq!(back.len(), 13);
        assert_eq!(back.input_shape(), front.config().output_shape());
        let (_, last) = split_network(&net, 16).unwrap();
        assert_eq!(last.len(), 1);
        assert_eq!(last.config().layer(1).kind, LayerKind::Softmax);
    }

    #[test]
    fn interior_dense_cut_rejected() {
        let net = fixture(FixtureArch::DenseBlock);
        assert!(matches!(
            split_network(&net, 3),
            Err(PartitionError::InvalidCut { cut: 3, .. })
        ));
        assert!(matches!(split_network(&net, 0), Err(PartitionError::InvalidCut { .. })));
        assert!(matches!(
            split_network(&net, 14),
            Err(PartitionError::InvalidCut { .. })
        ));
    }

    #[test]
    fn join_restores_original() {
        let net = fixture(FixtureArch::DenseBlock);
        for cut in valid_partition_points(&net) {
            let (front, back) = split_network(&net, cut).unwrap();
            assert_eq!(join_networks(&front, &back).unwrap(), net, "cut {cut}");
        }
    }

    #[test]
    fn plan_round_trip() {
        let plan = PartitionPlan {
            cut: 4,
            layers: 17,
            input_shape: Shape::new(32, 32, 3),
            ir_shape: Shape::new(8, 8, 8),
            classes: 10,
        };
        assert_eq!(PartitionPlan::parse(&plan.to_text()).unwrap(), plan);
        assert!(PartitionPlan::parse("cut=x").is_err());
    }

    #[test]
    fn label_count_checked() {
        let net = fixture(FixtureArch::Plain17);
        let key = SecretKey::from_bytes([1; 32]);
        assert!(matches!(
            partition_model(&net, 4, &fixture_labels(9), &key),
            Err(PartitionError::LabelCount { labels: 9, classes: 10 })
        ));
    }

    #[test]
    fn labels_round_trip() {
        let labels = fixture_labels(3);
        assert_eq!(decode_labels(&encode_labels(&labels)).unwrap(), labels);
    }
}
