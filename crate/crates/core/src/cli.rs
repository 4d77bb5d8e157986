//! `irshield` command line. Exit codes: 0 success, 1 operational error,
//! 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::assessment::{assess_model, valid_partition_points};
use crate::crypto::{self, ContentType, SealedContainer, SecretKey};
use crate::image::{load_image, save_image};
use crate::nn::{
    fixture_image, fixture_labels, gen_fixture_model, parse_network, FixtureArch, ModelConfig, NetworkDef,
};
use crate::partition::{partition_model_with_rng, PartitionArtifacts, FRONTNET_FILE, LABELS_FILE};
use crate::serving::{deploy, serve, Client, ClientKeys};
use crate::workload::{flop_profile, frontnet_fraction};

pub const ROOT_KEY_ENV: &str = "IRSHIELD_ROOT_KEY";

#[derive(Parser, Debug)]
#[command(
    name = "irshield",
    version,
    about = "Partitioned ConvNet inference behind a simulated enclave"
)]
struct Cli {
    /// Seed for every random choice (keys, nonces, fixtures). Omit for OS entropy.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score every layer of a model with an oracle and pick the partition layer.
    Assess(AssessArgs),
    /// Per-layer FLOP profile of a model config.
    Flops(FlopsArgs),
    /// Split a model into sealed FrontNet, labels and plaintext BackNet.
    Partition(PartitionArgs),
    /// Write a seeded fixture model, its labels and test images.
    GenFixture(GenFixtureArgs),
    /// Print a fresh 256-bit key as hex.
    Keygen,
    /// Run the inference daemon over an artifact directory.
    Serve(ServeArgs),
    /// Classify an image through a running daemon.
    Predict(PredictArgs),
    /// Seal a file into an authenticated container.
    Seal(SealArgs),
    /// Open an authenticated container.
    Open(OpenArgs),
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long)]
    oracle_weights: PathBuf,
    /// Directory of PGM/PPM images.
    #[arg(long)]
    images: PathBuf,
    /// Where `assessment.txt` and `assessment.tsv` are written.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FlopsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also report the FrontNet share of the workload for this cut.
    #[arg(long)]
    cut: Option<usize>,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// One class label per line.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    cut: usize,
    /// 64 hex characters.
    #[arg(long)]
    model_key: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenFixtureArgs {
    /// plain17, plain28 or denseblock.
    #[arg(long, default_value = "plain17")]
    arch: String,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Number of test images to write under `images/`.
    #[arg(long, default_value_t = 5)]
    images: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RootKeyArg {
    /// Attestation root key (64 hex). Defaults to $IRSHIELD_ROOT_KEY.
    #[arg(long)]
    root_key: Option<String>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    root: RootKeyArg,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    server: String,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    model_key: String,
    #[arg(long)]
    img_key: String,
    /// Expected enclave measurement (64 hex).
    #[arg(long, conflicts_with = "artifacts", required_unless_present = "artifacts")]
    measurement: Option<String>,
    /// Artifact directory to compute the expected measurement from.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    /// Keep at most this many results.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    root: RootKeyArg,
}

#[derive(Args, Debug)]
struct SealArgs {
    #[arg(long)]
    key: String,
    /// frontnet, labels, image, result or keys.
    #[arg(long = "type")]
    content_type: String,
    /// Input file. With `--type image` a PGM/PPM file is converted to tensor bytes first.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OpenArgs {
    #[arg(long)]
    key: String,
    #[arg(long = "type")]
    content_type: String,
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult = Result<(), String>;

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_network(cfg: &Path, weights: &Path) -> Result<NetworkDef, String> {
    parse_network(&read_text(cfg)?, &read(weights)?).map_err(|e| format!("{}: {e}", cfg.display()))
}

fn parse_key(what: &str, hex: &str) -> Result<SecretKey, String> {
    SecretKey::from_hex(hex).map_err(|e| format!("{what}: {e}"))
}

fn root_key(arg: &RootKeyArg) -> Result<SecretKey, String> {
    match &arg.root_key {
        Some(hex) => parse_key("--root-key", hex),
        None => match std::env::var(ROOT_KEY_ENV) {
            Ok(hex) => parse_key(ROOT_KEY_ENV, &hex),
            Err(_) => Err(format!(
                "no attestation root key: pass --root-key or set {ROOT_KEY_ENV}"
            )),
        },
    }
}

fn content_type(name: &str) -> Result<ContentType, String> {
    ContentType::parse(name).ok_or_else(|| format!("unknown content type `{name}`"))
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_os_rng(),
    }
}

fn image_paths(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("{}: no .pgm or .ppm images", dir.display()));
    }
    Ok(paths)
}

fn assess(a: &AssessArgs) -> CliResult {
    let irgen = load_network(&a.model, &a.weights)?;
    let irval = load_network(&a.oracle, &a.oracle_weights)?;
    let images = image_paths(&a.images)?
        .iter()
        .map(|p| load_image(p).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let report = assess_model(&images, &irgen, &irval).map_err(|e| e.to_string())?;
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let table = report.to_table();
    write(&a.out.join("assessment.txt"), &table)?;
    write(&a.out.join("assessment.tsv"), report.to_tsv())?;
    print!("{table}");
    Ok(())
}

fn flops(a: &FlopsArgs) -> CliResult {
    let config = ModelConfig::parse(&read_text(&a.model)?).map_err(|e| format!("{}: {e}", a.model.display()))?;
    let profile = flop_profile(&config);
    print!("{}", profile.to_tsv());
    println!("# total_flops: {}", profile.total);
    if let Some(cut) = a.cut {
        let frac = frontnet_fraction(&profile, cut).map_err(|e| e.to_string())?;
        println!("# frontnet_fraction: {frac:.9}");
    }
    Ok(())
}

fn partition(a: &PartitionArgs, seed: Option<u64>) -> CliResult {
    let net = load_network(&a.model, &a.weights)?;
    let valid = valid_partition_points(&net);
    if a.cut >= 1 && a.cut < net.len() && !valid.contains(&a.cut) {
        let list: Vec<String> = valid.iter().map(usize::to_string).collect();
        return Err(format!(
            "layer {} is not a valid partition point (a later route reads across it); valid points: {}",
            a.cut,
            list.join(" ")
        ));
    }
    let labels: Vec<String> = read_text(&a.labels)?.lines().map(str::to_string).collect();
    let key = parse_key("--model-key", &a.model_key)?;
    let artifacts = partition_model_with_rng(&net, a.cut, &labels, &key, &mut rng(seed)).map_err(|e| e.to_string())?;
    artifacts.write_to_dir(&a.out).map_err(|e| e.to_string())?;
    println!("measurement: {}", hex::encode(measurement_of(&artifacts)));
    Ok(())
}

fn measurement_of(a: &PartitionArtifacts) -> [u8; 32] {
    crate::enclave::measurement(&a.frontnet, &a.labels)
}

fn gen_fixture(a: &GenFixtureArgs, seed: Option<u64>) -> CliResult {
    let arch: FixtureArch = a.arch.parse()?;
    let seed = seed.unwrap_or(1);
    let (cfg, weights) = gen_fixture_model(arch, seed, a.classes);
    fs::create_dir_all(a.out.join("images")).map_err(|e| format!("{}: {e}", a.out.display()))?;
    write(&a.out.join("model.cfg"), cfg)?;
    write(&a.out.join("model.weights"), weights)?;
    let labels: String = fixture_labels(a.classes).iter().map(|l| format!("{l}\n")).collect();
    write(&a.out.join("labels.txt"), labels)?;
    for i in 0..a.images {
        let img = fixture_image(arch.input_shape(), seed.wrapping_add(1000 + i as u64));
        let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
        let path = a.out.join("images").join(format!("img-{i:03}.{ext}"));
        save_image(&img, &path).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_serve(a: &ServeArgs, seed: Option<u64>) -> CliResult {
    let dep = deploy(&a.artifacts, a.k, root_key(&a.root)?).map_err(|e| e.to_string())?;
    let dep = match seed {
        Some(s) => dep.with_session_seed(s),
        None => dep,
    };
    eprintln!("serving {} on {}", a.artifacts.display(), a.listen);
    serve(a.listen.as_str(), dep).map_err(|e| format!("{}: {e}", a.listen))
}

fn predict(a: &PredictArgs, seed: Option<u64>) -> CliResult {
    let expected: [u8; 32] = match (&a.measurement, &a.artifacts) {
        (Some(hex), _) => hex::decode(hex.trim())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or("--measurement must be 64 hex characters")?,
        (None, Some(dir)) => {
            let fn_sealed = SealedContainer::from_bytes(&read(&dir.join(FRONTNET_FILE))?).map_err(|e| e.to_string())?;
            let lbl_sealed = SealedContainer::from_bytes(&read(&dir.join(LABELS_FILE))?).map_err(|e| e.to_string())?;
            crate::enclave::measurement(&fn_sealed, &lbl_sealed)
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let keys = ClientKeys {
        model_key: parse_key("--model-key", &a.model_key)?,
        img_key: parse_key("--img-key", &a.img_key)?,
    };
    let x = load_image(&a.image).map_err(|e| e.to_string())?;
    let mut client = Client::new(keys, root_key(&a.root)?, expected);
    if let Some(s) = seed {
        client = client.with_seed(s);
    }
    let mut session = client.connect(a.server.as_str()).map_err(|e| e.to_string())?;
    let mut result = session.predict(&x).map_err(|e| e.to_string())?;
    if let Some(k) = a.k {
        result.truncate(k);
    }
    for (label, score) in result {
        println!("{label}\t{score}");
    }
    Ok(())
}

fn seal(a: &SealArgs, seed: Option<u64>) -> CliResult {
    let key = parse_key("--key", &a.key)?;
    let ty = content_type(&a.content_type)?;
    let plaintext = if ty == ContentType::Image {
        load_image(&a.input).map_err(|e| e.to_string())?.to_bytes()
    } else {
        read(&a.input)?
    };
    let sealed = crypto::seal_with_context(&plaintext, &key, ty, &[], rng(seed).random());
    write(&a.out, sealed.to_bytes())
}

fn open(a: &OpenArgs) -> CliResult {
    let key = parse_key("--key", &a.key)?;
    let ty = content_type(&a.content_type)?;
    let c = SealedContainer::from_bytes(&read(&a.input)?).map_err(|e| e.to_string())?;
    let plain = crypto::open_as(&c, &key, ty, &[]).map_err(|e| format!("{}: {e}", a.input.display()))?;
    match &a.out {
        Some(path) => write(path, plain),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&plain).map_err(|e| e.to_string())
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Assess(a) => assess(a),
        Command::Flops(a) => flops(a),
        Command::Partition(a) => partition(a, seed),
        Command::GenFixture(a) => gen_fixture(a, seed),
        Command::Keygen => {
            println!("{}", SecretKey::generate(&mut rng(seed)).to_hex());
            Ok(())
        }
        Command::Serve(a) => run_serve(a, seed),
        Command::Predict(a) => predict(a, seed),
        Command::Seal(a) => seal(a, seed),
        Command::Open(a) => open(a),
    };
    match result {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}
