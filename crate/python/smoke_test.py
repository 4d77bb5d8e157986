"""Smoke test for the irshield Python module.

Build and install the extension first, e.g.

    maturin develop -m crates/python/Cargo.toml

then run `python python/smoke_test.py`.
"""

import math
import tempfile

import irshield


def main():
    net = irshield.Network.fixture("plain17", seed=42)
    assert len(net) == 17
    x = irshield.fixture_image("plain17", 7)
    assert x.shape == net.input_shape

    probs = net.forward(x)
    assert len(probs) == 10
    assert abs(sum(probs) - 1.0) < 1e-5

    # composing the two halves reproduces the full model
    cut = 4
    assert cut in net.valid_partition_points()
    ir = net.forward_range(1, cut, x)
    tail = net.forward_range(cut + 1, len(net), ir)
    assert tail.data == probs

    assert abs(irshield.uniform_baseline([1.0] + [0.0] * 999) - 3.0) < 1e-9
    assert irshield.kl_divergence(probs, probs) < 1e-9
    assert irshield.choose_partition([0.9, 1.2, 0.8, 1.5, 2.0], [1, 2, 3, 4, 5]) == 4
    profile = net.flop_profile()
    assert profile[-1] == 1.0 and profile == sorted(profile)

    oracle = irshield.Network.fixture("plain17", seed=4)
    images = [irshield.fixture_image("plain17", s) for s in range(3)]
    report = irshield.assess(images, net, oracle)
    assert len(report.deltas) == len(net) - 1
    assert all(math.isfinite(d) for d in report.deltas)

    key = irshield.generate_key()
    sealed = irshield.seal(b"hello", key, "labels")
    assert irshield.open(sealed, key, "labels") == b"hello"
    try:
        irshield.open(sealed, irshield.generate_key(), "labels")
    except ValueError:
        pass
    else:
        raise AssertionError("wrong key accepted")

    model_key, img_key, root_key = (irshield.generate_key(s) for s in (1, 2, 3))
    labels = irshield.fixture_labels(10)
    with tempfile.TemporaryDirectory() as out:
        measurement = irshield.partition(net, cut, labels, model_key, out)
        assert measurement == irshield.measurement(out)
        with irshield.Server(out, root_key, k=3) as server:
            result = irshield.predict(server.address, x, model_key, img_key, root_key, measurement)
    expected = [(labels[i - 1], p) for i, p in irshield.top_k(probs, 3)]
    assert result == expected, (result, expected)
    print("irshield smoke test passed:", result[0])


if __name__ == "__main__":
    main()
