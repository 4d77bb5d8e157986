//! Python bindings: networks, assessment, sealing, partitioning and the
//! serving client and daemon.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use irshield_core::assessment;
use irshield_core::crypto::{self, ContentType, SealedContainer, SecretKey};
use irshield_core::nn::{self, FixtureArch, NetworkDef, ProbVector, Shape};
use irshield_core::partition::{partition_model, PartitionArtifacts};
use irshield_core::serving::{self, ClientKeys};
use irshield_core::workload;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_key(hex: &str) -> PyResult<SecretKey> {
    SecretKey::from_hex(hex).map_err(value_err)
}

fn parse_type(name: &str) -> PyResult<ContentType> {
    ContentType::parse(name).ok_or_else(|| value_err(format!("unknown content type `{name}`")))
}

fn probs(values: Vec<f32>) -> PyResult<ProbVector> {
    ProbVector::new(values).map_err(value_err)
}

/// A CHW float tensor.
#[pyclass(module = "irshield", frozen, from_py_object)]
#[derive(Clone)]
struct Tensor {
    inner: nn::Tensor,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> PyResult<Self> {
        let inner = nn::Tensor::new(Shape::new(width, height, channels), data).map_err(value_err)?;
        Ok(Tensor { inner })
    }

    /// `(width, height, channels)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let s = self.inner.shape();
        (s.width, s.height, s.channels)
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Tensor {
            inner: nn::Tensor::from_bytes(data).map_err(value_err)?,
        })
    }

    /// Reads a binary PGM or PPM image.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Tensor {
            inner: irshield_core::image::load_image(&path).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.data().len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor({})", self.inner.shape())
    }
}

/// A parsed model: layer config plus weights.
#[pyclass(module = "irshield", frozen)]
struct Network {
    inner: NetworkDef,
}

#[pymethods]
impl Network {
    #[new]
    fn new(config: &str, weights: &[u8]) -> PyResult<Self> {
        Ok(Network {
            inner: nn::parse_network(config, weights).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(config_path: PathBuf, weights_path: PathBuf) -> PyResult<Self> {
        let config = std::fs::read_to_string(&config_path).map_err(runtime_err)?;
        let weights = std::fs::read(&weights_path).map_err(runtime_err)?;
        Self::new(&config, &weights)
    }

    /// Seeded random-weight fixture model.
    #[staticmethod]
    #[pyo3(signature = (arch, seed, classes = 10))]
    fn fixture(arch: &str, seed: u64, classes: usize) -> PyResult<Self> {
        let arch: FixtureArch = arch.parse().map_err(value_err)?;
        let (cfg, weights) = nn::gen_fixture_model(arch, seed, classes);
        Self::new(&cfg, &weights)
    }

    fn forward(&self, x: &Tensor) -> PyResult<Vec<f32>> {
        Ok(nn::forward(&self.inner, &x.inner)
            .map_err(value_err)?
            .as_slice()
            .to_vec())
    }

    /// Output of layer `to_layer` given the output of layer `from_layer - 1`.
    fn forward_range(&self, from_layer: usize, to_layer: usize, x: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: nn::forward_range(&self.inner, from_layer, to_layer, &x.inner).map_err(value_err)?,
        })
    }

    fn valid_partition_points(&self) -> Vec<usize> {
        assessment::valid_partition_points(&self.inner).into_iter().collect()
    }

    /// Cumulative FLOP fraction after each layer.
    fn flop_profile(&self) -> Vec<f64> {
        workload::flop_profile(self.inner.config()).cumulative
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let s = self.inner.input_shape();
        (s.width, s.height, s.channels)
    }

    fn config_text(&self) -> String {
        self.inner.to_config_text()
    }

    fn weights_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_weights_bytes())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network({} layers, input {})",
            self.inner.len(),
            self.inner.input_shape()
        )
    }
}

#[pyfunction]
fn fixture_image(arch: &str, seed: u64) -> PyResult<Tensor> {
    let arch: FixtureArch = arch.parse().map_err(value_err)?;
    Ok(Tensor {
        inner: nn::fixture_image(arch.input_shape(), seed),
    })
}

#[pyfunction]
fn fixture_labels(classes: usize) -> Vec<String> {
    nn::fixture_labels(classes)
}

/// Best `k` entries as `(1-based class, probability)`.
#[pyfunction]
fn top_k(p: Vec<f32>, k: usize) -> PyResult<Vec<(usize, f32)>> {
    nn::top_k(&probs(p)?, k).map_err(value_err)
}

#[pyfunction]
fn kl_divergence(p: Vec<f32>, q: Vec<f32>) -> PyResult<f64> {
    assessment::kl_divergence(&probs(p)?, &probs(q)?).map_err(value_err)
}

#[pyfunction]
fn uniform_baseline(p: Vec<f32>) -> PyResult<f64> {
    Ok(assessment::uniform_baseline(&probs(p)?))
}

#[pyfunction]
fn choose_partition(deltas: Vec<f64>, valid: Vec<usize>) -> Option<usize> {
    assessment::choose_partition(&deltas, &valid.into_iter().collect())
}

/// Result of scoring every layer of a model.
#[pyclass(module = "irshield", frozen)]
struct AssessmentReport {
    inner: assessment::AssessmentReport,
}

#[pymethods]
impl AssessmentReport {
    #[getter]
    fn chosen(&self) -> Option<usize> {
        self.inner.chosen
    }

    #[getter]
    fn deltas(&self) -> Vec<f64> {
        self.inner.deltas()
    }

    #[getter]
    fn uniform_baseline(&self) -> f64 {
        self.inner.uniform_baseline
    }

    #[getter]
    fn valid(&self) -> Vec<usize> {
        self.inner.valid.iter().copied().collect()
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    fn to_table(&self) -> String {
        self.inner.to_table()
    }
}

#[pyfunction]
fn assess(py: Python<'_>, images: Vec<Tensor>, model: &Network, oracle: &Network) -> PyResult<AssessmentReport> {
    let xs: Vec<nn::Tensor> = images.into_iter().map(|t| t.inner).collect();
    let (model, oracle) = (&model.inner, &oracle.inner);
    let inner = py
        .detach(|| assessment::assess_model(&xs, model, oracle))
        .map_err(value_err)?;
    Ok(AssessmentReport { inner })
}

/// A fresh 256-bit key as hex. A seed makes it reproducible.
#[pyfunction]
#[pyo3(signature = (seed = None))]
fn generate_key(seed: Option<u64>) -> String {
    match seed {
        Some(seed) => SecretKey::generate(&mut ChaCha20Rng::seed_from_u64(seed)).to_hex(),
        None => SecretKey::generate(&mut rand::rng()).to_hex(),
    }
}

/// Seals `data` into a container of the given type
/// (`frontnet`, `labels`, `image`, `result` or `keys`).
#[pyfunction]
fn seal<'py>(py: Python<'py>, data: &[u8], key: &str, content_type: &str) -> PyResult<Bound<'py, PyBytes>> {
    let c = crypto::seal(data, &parse_key(key)?, parse_type(content_type)?);
    Ok(PyBytes::new(py, &c.to_bytes()))
}

/// Opens a container, checking its type.
#[pyfunction]
#[pyo3(name = "open")]
fn open_container<'py>(py: Python<'py>, data: &[u8], key: &str, content_type: &str) -> PyResult<Bound<'py, PyBytes>> {
    let c = SealedContainer::from_bytes(data).map_err(value_err)?;
    let plain = crypto::open_as(&c, &parse_key(key)?, parse_type(content_type)?, &[]).map_err(value_err)?;
    Ok(PyBytes::new(py, &plain))
}

/// Splits `model` at `cut`, seals the FrontNet and labels under `model_key`
/// and writes the artifact directory. Returns the enclave measurement (hex).
#[pyfunction]
fn partition(model: &Network, cut: usize, labels: Vec<String>, model_key: &str, out_dir: PathBuf) -> PyResult<String> {
    let artifacts = partition_model(&model.inner, cut, &labels, &parse_key(model_key)?).map_err(value_err)?;
    artifacts.write_to_dir(&out_dir).map_err(runtime_err)?;
    Ok(measurement_hex(&artifacts))
}

fn measurement_hex(a: &PartitionArtifacts) -> String {
    hex::encode(irshield_core::enclave::measurement(&a.frontnet, &a.labels))
}

/// Enclave measurement of an artifact directory (hex).
#[pyfunction]
fn measurement(artifacts_dir: PathBuf) -> PyResult<String> {
    let a = PartitionArtifacts::read_from_dir(&artifacts_dir).map_err(value_err)?;
    Ok(measurement_hex(&a))
}

/// Inference daemon serving an artifact directory in background threads.
#[pyclass(module = "irshield")]
struct Server {
    inner: Option<serving::Server>,
    address: String,
}

#[pymethods]
impl Server {
    #[new]
    #[pyo3(signature = (artifacts_dir, root_key, k = 5, listen = "127.0.0.1:0"))]
    fn new(artifacts_dir: PathBuf, root_key: &str, k: usize, listen: &str) -> PyResult<Self> {
        let dep = serving::deploy(&artifacts_dir, k, parse_key(root_key)?).map_err(value_err)?;
        let server = serving::Server::spawn(listen, dep).map_err(runtime_err)?;
        Ok(Server {
            address: server.local_addr().to_string(),
            inner: Some(server),
        })
    }

    /// `host:port` the daemon listens on.
    #[getter]
    fn address(&self) -> &str {
        &self.address
    }

    /// Stops accepting connections.
    fn shutdown(&mut self, py: Python<'_>) {
        if let Some(s) = self.inner.take() {
            py.detach(|| s.shutdown());
        }
    }

    fn __enter__(slf: Py<Self>) -> Py<Self> {
        slf
    }

    fn __exit__(
        &mut self,
        py: Python<'_>,
        _ty: Option<Bound<'_, PyAny>>,
        _value: Option<Bound<'_, PyAny>>,
        _tb: Option<Bound<'_, PyAny>>,
    ) -> bool {
        self.shutdown(py);
        false
    }
}

/// Attests the daemon at `address`, provisions keys and classifies `image`.
/// Returns `(label, score)` pairs, best first.
#[pyfunction]
fn predict(
    py: Python<'_>,
    address: &str,
    image: &Tensor,
    model_key: &str,
    img_key: &str,
    root_key: &str,
    measurement: &str,
) -> PyResult<Vec<(String, f32)>> {
    let keys = ClientKeys {
        model_key: parse_key(model_key)?,
        img_key: parse_key(img_key)?,
    };
    let root = parse_key(root_key)?;
    let expected: [u8; 32] = hex::decode(measurement)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| value_err("measurement must be 64 hex characters"))?;
    let x = image.inner.clone();
    py.detach(|| {
        let mut client = serving::Client::new(keys, root, expected);
        let mut session = client.connect(address)?;
        session.predict(&x)
    })
    .map_err(runtime_err)
}

#[pymodule]
fn irshield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Network>()?;
    m.add_class::<AssessmentReport>()?;
    m.add_class::<Server>()?;
    m.add_function(wrap_pyfunction!(fixture_image, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_labels, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(choose_partition, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(generate_key, m)?)?;
    m.add_function(wrap_pyfunction!(seal, m)?)?;
    m.add_function(wrap_pyfunction!(open_container, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(measurement, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    Ok(())
}
