//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so
//! the report reads in order: `cargo test --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::io::{self, Cursor, Read, Write};
use std::panic;
use std::process::{Command, ExitCode};
use std::thread;
use std::time::{Duration, Instant};

use common::{fixture, image, key, scenario, Scenario, CLASSES};
use irshield_core::assessment::{
    assess_model, choose_partition, kl_divergence, uniform_baseline, valid_partition_points,
};
use irshield_core::audit::{find_leak, Tap, LEAK_WINDOW};
use irshield_core::crypto::{seal, ContentType, SealedContainer};
use irshield_core::enclave::{
    decode_response, encode_request, evidence_mac, make_key_message, BoundaryRequest, BoundaryResponse, Enclave,
    EnclaveSession, ErrorCode, Evidence,
};
use irshield_core::nn::{
    forward, forward_range, top_k, Activation, ConvParams, FixtureArch, LayerKind, ProbVector, Shape,
};
use irshield_core::partition::{encode_labels, partition_model, split_network};
use irshield_core::serving::{read_message, serve_connection, Client, ClientError, ClientKeys, Server, WireError};
use irshield_core::workload::{flop_profile, layer_flops_for};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn bits(p: &ProbVector) -> Vec<u32> {
    p.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn random_pv(rng: &mut ChaCha8Rng, n: usize) -> ProbVector {
    let mut v: Vec<f32> = (0..n).map(|_| rng.random_range(0.0f32..1.0).powi(3)).collect();
    if rng.random_bool(0.2) {
        v[rng.random_range(0..n)] = 0.0;
    }
    v[0] += 1e-3;
    let s: f32 = v.iter().sum();
    ProbVector::new(v.iter().map(|x| x / s).collect()).unwrap()
}

/// Criterion 1: BackNet after FrontNet equals the full model, bit for bit.
fn compositionality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..120 {
        let arch = FixtureArch::ALL[trial % 3];
        let net = fixture(arch, rng.random_range(0..10_000));
        let valid: Vec<usize> = valid_partition_points(&net).into_iter().collect();
        let cut = valid[rng.random_range(0..valid.len())];
        let (front, back) = split_network(&net, cut).unwrap();
        let x = image(arch, rng.random());
        let composed = forward(&back, &forward_range(&front, 1, cut, &x).unwrap()).unwrap();
        assert_eq!(bits(&composed), bits(&forward(&net, &x).unwrap()), "trial {trial}");
    }
}

/// Criterion 2: The partition rule against a brute-force suffix scan.
fn partition_rule() {
    let oracle = |deltas: &[f64], valid: &BTreeSet<usize>| {
        (1..=deltas.len()).find(|&i| valid.contains(&i) && deltas[i - 1..].iter().all(|&d| d > 1.0))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..12_000 {
        let n = rng.random_range(0..48);
        let dense = trial % 3 == 0;
        let deltas: Vec<f64> = (0..n)
            .map(|i| {
                if dense {
                    // fluctuates around the baseline inside blocks
                    0.4 + 2.0 * i as f64 / n as f64 + rng.random_range(-0.9..0.9)
                } else {
                    rng.random_range(0.0..2.5)
                }
            })
            .collect();
        let valid: BTreeSet<usize> = (1..=n).filter(|_| rng.random_bool(0.6)).collect();
        assert_eq!(
            choose_partition(&deltas, &valid),
            oracle(&deltas, &valid),
            "trial {trial}"
        );
    }
}

/// Criterion 3: KL identity, non-negativity, baseline closed form, one-hot over 1000.
fn kl_machinery() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1500 {
        let n = rng.random_range(2..200);
        let p = random_pv(&mut rng, n);
        let q = random_pv(&mut rng, n);
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-9);
        assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        let s: f64 = p.as_slice().iter().map(|&v| v as f64).sum();
        let h10: f64 = p
            .as_slice()
            .iter()
            .map(|&v| v as f64 / s)
            .filter(|&v| v > 0.0)
            .map(|v| -v * v.log10())
            .sum();
        assert!((uniform_baseline(&p) - ((n as f64).log10() - h10)).abs() < 1e-9);
    }
    let mut one_hot = vec![0.0f32; 1000];
    one_hot[0] = 1.0;
    let b = uniform_baseline(&ProbVector::new(one_hot).unwrap());
    assert!((b - 3.0).abs() < 1e-9, "{b}");
}

/// Criterion 4: Conv FLOPs against an instrumented count for every config with dims up
/// to 8; cumulative profiles monotone and ending at 1.
fn flop_accounting() {
    let mut configs = Vec::new();
    for w in 1..=8usize {
        for h in 1..=8usize {
            for k in 1..=8usize {
                for stride in 1..=8usize {
                    for pad in [false, true] {
                        configs.push((w, h, k, stride, pad));
                    }
                }
            }
        }
    }
    configs.par_iter().for_each(|&(w, h, k, stride, pad)| {
        let p = if pad { k / 2 } else { 0 };
        let (pw, ph) = (w + 2 * p, h + 2 * p);
        for c_in in 1..=8usize {
            for c_out in 1..=8usize {
                for (bias, bn) in [(false, false), (true, false), (false, true), (true, true)] {
                    let kind = LayerKind::Convolutional(ConvParams {
                        filters: c_out,
                        size: k,
                        stride,
                        pad,
                        activation: Activation::Linear,
                        batch_normalize: bn,
                        bias,
                    });
                    let got = layer_flops_for(&kind, Shape::new(w, h, c_in));
                    if pw < k || ph < k {
                        assert!(got.is_err());
                        continue;
                    }
                    // count a multiply and an add per window tap, then the epilogue
                    let mut ops = 0u64;
                    let mut outputs = 0u64;
                    let mut oy = 0;
                    while oy + k <= ph {
                        let mut ox = 0;
                        while ox + k <= pw {
                            outputs += c_out as u64;
                            ops += 2 * (c_in * k * k * c_out) as u64;
                            ox += stride;
                        }
                        oy += stride;
                    }
                    ops += outputs * (bias as u64 + 2 * bn as u64);
                    assert_eq!(got.unwrap(), ops, "{w}x{h}x{c_in} k{k} s{stride} pad={pad} out={c_out}");
                }
            }
        }
    });
    for arch in FixtureArch::ALL {
        for seed in 0..3 {
            let profile = flop_profile(fixture(arch, seed).config());
            assert!(profile.cumulative.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*profile.cumulative.last().unwrap(), 1.0);
        }
    }
}

/// Criterion 5: Dense-block fixtures can only be cut at block boundaries.
fn dense_validity() {
    let expected: BTreeSet<usize> = [1, 5, 6, 7, 11, 12, 13].into();
    for seed in 0..5 {
        let net = fixture(FixtureArch::DenseBlock, seed);
        assert_eq!(valid_partition_points(&net), expected);
        let x = image(FixtureArch::DenseBlock, seed);
        let n = net.len();
        for i in 1..n {
            let ir = forward_range(&net, 1, i, &x).unwrap();
            let back = forward_range(&net, i + 1, n, &ir);
            assert_eq!(back.is_ok(), expected.contains(&i), "layer {i}");
        }
    }
}

fn ecall(enclave: &mut Enclave, req: &BoundaryRequest) -> BoundaryResponse {
    decode_response(&enclave.ecall(&encode_request(req))).unwrap()
}

fn provision(enclave: &mut Enclave, s: &Scenario, nonce: [u8; 32]) -> BoundaryResponse {
    let BoundaryResponse::Evidence(ev) = ecall(enclave, &BoundaryRequest::Attest(nonce)) else {
        panic!("attestation refused");
    };
    let msg = make_key_message(&ev, &s.root, &s.keys.model_key, &s.keys.img_key, [1; 12]);
    ecall(enclave, &BoundaryRequest::Provision(msg))
}

fn infer_frame(payload: &[u8]) -> Vec<u8> {
    let mut req = vec![0x13];
    req.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    req.extend_from_slice(payload);
    req
}

/// Criterion 6: Plaintext images are refused; no secret crosses the boundary or reaches
/// the host; label strings travel only inside result containers.
fn security_principles() {
    for (arch, cut) in [
        (FixtureArch::Plain17, 4),
        (FixtureArch::Plain28, 9),
        (FixtureArch::DenseBlock, 7),
    ] {
        let s = scenario(arch, 60, cut);
        let boundary = Tap::new();
        let session = EnclaveSession::create(s.artifacts.frontnet.clone(), s.artifacts.labels.clone()).unwrap();
        let mut enclave = Enclave::launch(session, s.root.clone()).with_tap(boundary.clone());
        assert_eq!(provision(&mut enclave, &s, [9; 32]), BoundaryResponse::Provisioned);

        let mut images = Vec::new();
        for seed in 0..4 {
            let x = image(arch, seed);
            // (I) the raw tensor is not a container and is refused
            let raw = decode_response(&enclave.ecall(&infer_frame(&x.to_bytes()))).unwrap();
            assert_eq!(raw, BoundaryResponse::Error(ErrorCode::Malformed as u16));
            let sealed = seal(&x.to_bytes(), &s.keys.img_key, ContentType::Image);
            let BoundaryResponse::Ir(ir) = ecall(&mut enclave, &BoundaryRequest::Infer(sealed)) else {
                panic!("inference refused");
            };
            // (II/III) the IR is the cut layer's output
            assert_eq!(ir.shape(), s.net.config().output_of(s.artifacts.plan.cut));
            let top = top_k(&forward(&s.artifacts.backnet().unwrap(), &ir).unwrap(), 3).unwrap();
            let BoundaryResponse::Result(result) = ecall(&mut enclave, &BoundaryRequest::MapClasses(top)) else {
                panic!("mapping refused");
            };
            assert_eq!(result.content_type, ContentType::Result);
            images.push(x);
        }

        // host-visible bytes of a served session over the wire
        let host = Tap::new();
        let server = Server::spawn("127.0.0.1:0", s.deployment(3).with_tap(host.clone())).unwrap();
        let mut client = Client::new(s.keys.clone(), s.root.clone(), s.measurement());
        {
            let mut conn = client.connect(server.local_addr()).unwrap();
            for x in &images {
                conn.predict(x).unwrap();
            }
        }
        server.shutdown();

        let (front, _) = split_network(&s.net, cut).unwrap();
        let mut secrets = vec![
            ("frontnet weights", front.to_weights_bytes()),
            ("labels", encode_labels(&s.labels)),
            ("model key", s.keys.model_key.as_bytes().to_vec()),
            ("image key", s.keys.img_key.as_bytes().to_vec()),
            ("root key", s.root.as_bytes().to_vec()),
        ];
        secrets.extend(images.iter().map(|x| ("image", x.to_bytes())));
        // The boundary stream also carries the raw tensors refused above, so
        // images are audited against enclave responses separately.
        for (stream, with_images) in [(boundary.snapshot(), false), (host.snapshot(), true)] {
            for (name, secret) in &secrets {
                if *name == "image" && !with_images {
                    continue;
                }
                assert_eq!(find_leak(secret, &stream, LEAK_WINDOW), None, "{name} leaked");
            }
            // (IV)
            for label in &s.labels {
                assert!(!stream.windows(label.len()).any(|w| w == label.as_bytes()), "{label}");
            }
        }
        assert_boundary_responses_clean(&s, &images);
    }
}

/// Replays a session on a fresh enclave recording only responses, then checks
/// images against them.
fn assert_boundary_responses_clean(s: &Scenario, images: &[irshield_core::nn::Tensor]) {
    let session = EnclaveSession::create(s.artifacts.frontnet.clone(), s.artifacts.labels.clone()).unwrap();
    let mut enclave = Enclave::launch(session, s.root.clone());
    let mut responses = Vec::new();
    let BoundaryResponse::Evidence(ev) = ecall(&mut enclave, &BoundaryRequest::Attest([2; 32])) else {
        panic!()
    };
    responses.extend(ev.to_bytes());
    let msg = make_key_message(&ev, &s.root, &s.keys.model_key, &s.keys.img_key, [1; 12]);
    responses.extend(enclave.ecall(&encode_request(&BoundaryRequest::Provision(msg))));
    for x in images {
        responses.extend(enclave.ecall(&infer_frame(&x.to_bytes())));
        let sealed = seal(&x.to_bytes(), &s.keys.img_key, ContentType::Image);
        responses.extend(enclave.ecall(&encode_request(&BoundaryRequest::Infer(sealed))));
        responses.extend(enclave.ecall(&encode_request(&BoundaryRequest::MapClasses(vec![(1, 0.5)]))));
    }
    for x in images {
        assert_eq!(find_leak(&x.to_bytes(), &responses, LEAK_WINDOW), None, "image leaked");
    }
}

/// Criterion 7: Tampered, wrong-key and swapped artifacts are denied with no IR.
fn aead_denial() {
    let s = scenario(FixtureArch::Plain17, 70, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ir_frames = |enclave_tap: &Tap| -> usize {
        // responses are framed; count IR frames by walking the stream
        let bytes = enclave_tap.snapshot();
        let mut pos = 0;
        let mut irs = 0;
        while pos + 9 <= bytes.len() {
            let len = u64::from_le_bytes(bytes[pos + 1..pos + 9].try_into().unwrap()) as usize;
            if bytes[pos] == 0x23 {
                irs += 1;
            }
            pos += 9 + len;
        }
        irs
    };

    // images
    let tap = Tap::new();
    let session = EnclaveSession::create(s.artifacts.frontnet.clone(), s.artifacts.labels.clone()).unwrap();
    let mut enclave = Enclave::launch(session, s.root.clone());
    assert_eq!(provision(&mut enclave, &s, [3; 32]), BoundaryResponse::Provisioned);
    let mut enclave = enclave.with_tap(tap.clone());
    let good = seal(&image(s.arch, 1).to_bytes(), &s.keys.img_key, ContentType::Image).to_bytes();
    let mut denials = 0;
    for _ in 0..400 {
        let mut t = good.clone();
        let i = rng.random_range(0..t.len());
        t[i] ^= 1 << rng.random_range(0..8);
        let resp = enclave.ecall(&infer_frame(&t));
        assert_eq!(resp.len(), 11, "denial carries only a code");
        denials += 1;
    }
    for bad in [
        seal(&image(s.arch, 1).to_bytes(), &key(404), ContentType::Image),
        seal(&image(s.arch, 1).to_bytes(), &s.keys.img_key, ContentType::Labels),
    ] {
        let resp = enclave.ecall(&encode_request(&BoundaryRequest::Infer(bad)));
        assert_eq!(
            decode_response(&resp).unwrap(),
            BoundaryResponse::Error(ErrorCode::AuthFailure as u16)
        );
        denials += 1;
    }
    assert_eq!(ir_frames(&tap), 0);
    assert!(denials > 400);

    // model and labels containers
    let other = partition_model(&fixture(FixtureArch::Plain17, 71), 5, &s.labels, &s.keys.model_key).unwrap();
    let mut cases: Vec<(SealedContainer, SealedContainer)> = Vec::new();
    for which in 0..2 {
        let src = if which == 0 {
            &s.artifacts.frontnet
        } else {
            &s.artifacts.labels
        };
        let bytes = src.to_bytes();
        for _ in 0..60 {
            let mut t = bytes.clone();
            let i = rng.random_range(0..t.len());
            t[i] ^= 1 << rng.random_range(0..8);
            let Ok(c) = SealedContainer::from_bytes(&t) else {
                continue;
            };
            if which == 0 {
                cases.push((c, s.artifacts.labels.clone()));
            } else {
                cases.push((s.artifacts.frontnet.clone(), c));
            }
        }
    }
    cases.push((s.artifacts.frontnet.clone(), other.labels.clone()));
    cases.push((other.frontnet.clone(), s.artifacts.labels.clone()));
    for (fn_c, lbl_c) in cases {
        let Ok(session) = EnclaveSession::create(fn_c, lbl_c) else {
            continue;
        };
        let tap = Tap::new();
        let mut enclave = Enclave::launch(session, s.root.clone()).with_tap(tap.clone());
        assert!(matches!(
            provision(&mut enclave, &s, [4; 32]),
            BoundaryResponse::Error(_)
        ));
        let img = seal(&image(s.arch, 2).to_bytes(), &s.keys.img_key, ContentType::Image);
        assert_eq!(
            ecall(&mut enclave, &BoundaryRequest::Infer(img)),
            BoundaryResponse::Error(ErrorCode::NotReady as u16)
        );
        assert_eq!(ir_frames(&tap), 0);
    }

    // wrong model key
    let session = EnclaveSession::create(s.artifacts.frontnet.clone(), s.artifacts.labels.clone()).unwrap();
    let mut enclave = Enclave::launch(session, s.root.clone());
    let BoundaryResponse::Evidence(ev) = ecall(&mut enclave, &BoundaryRequest::Attest([5; 32])) else {
        panic!()
    };
    let msg = make_key_message(&ev, &s.root, &key(505), &s.keys.img_key, [1; 12]);
    assert_eq!(
        ecall(&mut enclave, &BoundaryRequest::Provision(msg)),
        BoundaryResponse::Error(ErrorCode::AuthFailure as u16)
    );
}

struct Scripted {
    input: Cursor<Vec<u8>>,
    output: Vec<u8>,
}

impl Read for Scripted {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.input.read(buf)
    }
}

impl Write for Scripted {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.output.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn wire_frame(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = vec![kind];
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Criterion 8: Wire round trips equal local top-k; concurrent clients; fuzzed frames.
fn end_to_end_serving() {
    const K: usize = 3;
    let expected = |s: &Scenario, x: &irshield_core::nn::Tensor| -> Vec<(String, f32)> {
        top_k(&forward(&s.net, x).unwrap(), K)
            .unwrap()
            .into_iter()
            .map(|(i, p)| (s.labels[i - 1].clone(), p))
            .collect()
    };
    for arch in FixtureArch::ALL {
        for cut in valid_partition_points(&fixture(arch, 80)) {
            let s = scenario(arch, 80, cut);
            let server = Server::spawn("127.0.0.1:0", s.deployment(K)).unwrap();
            let mut client = Client::new(s.keys.clone(), s.root.clone(), s.measurement());
            let mut conn = client.connect(server.local_addr()).unwrap();
            for seed in 0..5 {
                let x = image(arch, seed);
                assert_eq!(conn.predict(&x).unwrap(), expected(&s, &x), "{} cut {cut}", arch.name());
            }
        }
    }

    let s = scenario(FixtureArch::DenseBlock, 81, 6);
    let server = Server::spawn("127.0.0.1:0", s.deployment(K)).unwrap();
    let addr = server.local_addr();
    thread::scope(|scope| {
        for t in 0..12u64 {
            let s = &s;
            scope.spawn(move || {
                let keys = ClientKeys {
                    model_key: s.keys.model_key.clone(),
                    img_key: key(9000 + t),
                };
                let mut client = Client::new(keys, s.root.clone(), s.measurement());
                let mut conn = client.connect(addr).unwrap();
                for i in 0..5 {
                    let x = image(s.arch, t * 10 + i);
                    assert_eq!(conn.predict(&x).unwrap(), expected(s, &x));
                }
                // another user's image is denied on this session
                let foreign = seal(&image(s.arch, 0).to_bytes(), &key(1), ContentType::Image);
                assert!(matches!(
                    conn.predict_sealed(&foreign),
                    Err(ClientError::Server { code: 1, .. })
                ));
            });
        }
    });

    let dep = s.deployment(K);
    let m = s.measurement();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = wire_frame(
        5,
        &seal(&image(s.arch, 3).to_bytes(), &s.keys.img_key, ContentType::Image).to_bytes(),
    );
    let mut frames = 0;
    while frames < 10_000 {
        let mut script = Vec::new();
        if rng.random_bool(0.5) {
            let nonce: [u8; 32] = rng.random();
            let ev = Evidence {
                measurement: m,
                nonce,
                mac: evidence_mac(&s.root, &m, &nonce),
            };
            let msg = make_key_message(&ev, &s.root, &s.keys.model_key, &s.keys.img_key, [0; 12]);
            script.extend(wire_frame(1, &[]));
            script.extend(wire_frame(2, &nonce));
            script.extend(wire_frame(4, &msg.to_bytes()));
        }
        for _ in 0..rng.random_range(1..30) {
            let mut f = match rng.random_range(0..4) {
                0 => wire_frame(rng.random_range(0..10), &[]),
                1 => wire_frame(2, &[1; 32]),
                _ => img.clone(),
            };
            match rng.random_range(0..4) {
                0 => {
                    let i = rng.random_range(0..f.len());
                    f[i] = rng.random();
                }
                1 => f.truncate(rng.random_range(0..f.len())),
                2 => {
                    let mut junk = vec![0u8; rng.random_range(1..40)];
                    rng.fill_bytes(&mut junk);
                    f = junk;
                }
                _ => {}
            }
            script.extend(f);
            frames += 1;
        }
        let mut conn = Scripted {
            input: Cursor::new(script),
            output: Vec::new(),
        };
        serve_connection(&dep, &mut conn);
        let mut out = Cursor::new(conn.output);
        loop {
            match read_message(&mut out) {
                Ok(_) => {}
                Err(WireError::Closed) => break,
                Err(e) => panic!("server emitted a bad frame: {e}"),
            }
        }
    }
}

/// Criterion 9: `assess` over five fixture images: complete, finite, rule-consistent
/// and byte-stable.
fn assessment_pipeline() {
    let irgen = fixture(FixtureArch::Plain17, 42);
    let irval = fixture(FixtureArch::Plain17, 4);
    let images: Vec<_> = (0..5).map(|seed| image(FixtureArch::Plain17, seed)).collect();
    let report = assess_model(&images, &irgen, &irval).unwrap();
    assert_eq!(report.layers.len(), irgen.len() - 1);
    for (i, l) in report.layers.iter().enumerate() {
        assert_eq!(l.layer, i + 1);
        assert!(l.min_kl.is_finite() && l.max_kl.is_finite() && l.delta.is_finite());
        assert!(l.min_kl <= l.max_kl);
    }
    let deltas = report.deltas();
    let rule = (1..=deltas.len()).find(|&i| report.valid.contains(&i) && deltas[i - 1..].iter().all(|&d| d > 1.0));
    assert_eq!(report.chosen, rule);
    let again = assess_model(&images, &irgen, &irval).unwrap();
    assert_eq!(report.to_tsv(), again.to_tsv());
    assert_eq!(report.to_table(), again.to_table());

    // and through the command-line tool
    let bin = env!("CARGO_BIN_EXE_irshield");
    let work = tempfile::tempdir().unwrap();
    let (model, oracle) = (work.path().join("model"), work.path().join("oracle"));
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let path = |p: &std::path::Path| p.to_str().unwrap().to_string();
    for (dir, seed) in [(&model, "42"), (&oracle, "4")] {
        run(&[
            "--seed",
            seed,
            "gen-fixture",
            "--arch",
            "plain17",
            "--images",
            "5",
            "--out",
            &path(dir),
        ]);
    }
    let mut outputs = Vec::new();
    for round in 0..2 {
        let out = work.path().join(format!("report-{round}"));
        std::fs::create_dir_all(&out).unwrap();
        run(&[
            "assess",
            "--model",
            &path(&model.join("model.cfg")),
            "--weights",
            &path(&model.join("model.weights")),
            "--oracle",
            &path(&oracle.join("model.cfg")),
            "--oracle-weights",
            &path(&oracle.join("model.weights")),
            "--images",
            &path(&model.join("images")),
            "--out",
            &path(&out),
        ]);
        outputs.push(std::fs::read(out.join("assessment.tsv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let tsv = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(tsv.lines().count(), irgen.len());
    assert!(tsv
        .lines()
        .skip(1)
        .all(|l| l.split('\t').all(|c| !c.contains("inf") && !c.contains("NaN"))));
    assert_eq!(CLASSES, 10);
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(), Duration); 9] = [
        ("compositionality", compositionality, Duration::from_secs(60)),
        ("partition rule oracle", partition_rule, Duration::from_secs(10)),
        ("KL machinery", kl_machinery, Duration::from_secs(10)),
        ("FLOP accounting", flop_accounting, Duration::from_secs(60)),
        ("dense-block validity", dense_validity, Duration::from_secs(10)),
        ("security principles", security_principles, Duration::from_secs(60)),
        ("AEAD denial", aead_denial, Duration::from_secs(10)),
        ("end-to-end serving", end_to_end_serving, Duration::from_secs(120)),
        ("assessment pipeline", assessment_pipeline, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (n, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check);
        let took = start.elapsed();
        let verdict = match outcome {
            Ok(()) if took <= budget => "PASS",
            Ok(()) => "FAIL (over time budget)",
            Err(_) => "FAIL",
        };
        if verdict != "PASS" {
            failed += 1;
        }
        println!("criterion {}: {name}: {verdict} ({:.2}s)", n + 1, took.as_secs_f64());
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
