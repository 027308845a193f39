"""Serialization tests: round-trips, format details, loader totality."""

import json
import struct

import numpy as np
import pytest

from transcheck.core import DimensionError, DomainError, Image, Tensor3
from transcheck.io import (
    LoadError,
    load_idx_labels,
    load_image,
    load_network,
    load_query,
    network_from_document,
    network_to_document,
    save_image,
    save_network,
    spec_from_document,
    spec_to_document,
)
from transcheck.network import (
    ARGMAX,
    RELU,
    ConvolutionalLayer,
    FullyConnectedLayer,
    Network,
    forward,
)
from transcheck.transforms import (
    Perturbation,
    Photometric,
    Subsample,
    Translation,
    Zoom,
)


def _random_net(rng, with_conv=False):
    if with_conv:
        conv = ConvolutionalLayer(rng.normal(size=(2, 2, 2, 1)),
                                  rng.normal(size=2), 1, 3)
        oh, ow, k = conv.output_shape((4, 4, 1))
        head = FullyConnectedLayer(rng.normal(size=(3, oh * ow * k)),
                                   rng.normal(size=3), ARGMAX)
        return Network(4, 4, 1, (conv, head), 3)
    hidden = FullyConnectedLayer(rng.normal(size=(5, 9)),
                                 rng.normal(size=5), RELU)
    head = FullyConnectedLayer(rng.normal(size=(2, 5)),
                               rng.normal(size=2), ARGMAX)
    return Network(3, 3, 1, (hidden, head), 2)


# ------------------------------------------------------------------ networks


@pytest.mark.parametrize("with_conv", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_network_round_trip(tmp_path, seed, with_conv):
    rng = np.random.default_rng(seed)
    net = _random_net(rng, with_conv)
    path = str(tmp_path / "net.json")
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.class_count == net.class_count
    assert loaded.input_shape == net.input_shape
    for a, b in zip(loaded.layers, net.layers):
        if isinstance(b, ConvolutionalLayer):
            np.testing.assert_array_equal(a.kernels, b.kernels)
            np.testing.assert_array_equal(a.biases, b.biases)
            assert (a.pool_height, a.pool_width) == (b.pool_height, b.pool_width)
        else:
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)
            assert a.activation == b.activation


def test_minimal_single_layer_document():
    doc = {
        "input_shape": [1, 2, 1],
        "class_count": 2,
        "layers": [{"type": "fc", "weights": [[1.0, 0.0], [0.0, 1.0]],
                    "bias": [0.0, 0.0], "activation": "argmax"}],
    }
    net = network_from_document(doc)
    assert len(net.layers) == 1
    assert net.class_count == 2


def test_missing_bias_names_the_field():
    doc = {
        "input_shape": [1, 1, 1],
        "class_count": 2,
        "layers": [{"type": "fc", "weights": [[1.0], [0.0]],
                    "activation": "argmax"}],
    }
    with pytest.raises(LoadError, match="bias"):
        network_from_document(doc)


def test_network_rejects_nan_weights(tmp_path):
    path = tmp_path / "net.json"
    path.write_text('{"input_shape": [1, 1, 1], "class_count": 2, "layers": '
                    '[{"type": "fc", "weights": [[NaN], [1.0]], '
                    '"bias": [0.0, 0.0], "activation": "argmax"}]}')
    with pytest.raises(LoadError):
        load_network(str(path))


def test_network_invalid_json(tmp_path):
    path = tmp_path / "net.json"
    path.write_text("{not json")
    with pytest.raises(LoadError, match="JSON"):
        load_network(str(path))


def test_network_shape_mismatch_forwarded(tmp_path):
    doc = {
        "input_shape": [2, 2, 1],
        "class_count": 2,
        "layers": [{"type": "fc", "weights": [[1.0, 0.0], [0.0, 1.0]],
                    "bias": [0.0, 0.0], "activation": "argmax"}],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DimensionError):
        load_network(str(path))


# ------------------------------------------------------------------ PGM


def test_p2_basic(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_text("P2\n# tiny test card\n2 2\n255\n0 128\n64 255\n")
    im = load_image(str(path))
    assert im.shape == (2, 2, 1)
    assert im.p_max == 255.0
    np.testing.assert_array_equal(im.pixels()[:, :, 0],
                                  [[0.0, 128.0], [64.0, 255.0]])


def test_p5_matches_p2(tmp_path):
    p2 = tmp_path / "a.pgm"
    p2.write_text("P2\n3 2\n255\n0 1 2 250 251 252\n")
    p5 = tmp_path / "b.pgm"
    p5.write_bytes(b"P5\n3 2\n255\n" + bytes([0, 1, 2, 250, 251, 252]))
    a = load_image(str(p2))
    b = load_image(str(p5))
    np.testing.assert_array_equal(a.pixels(), b.pixels())
    assert a.p_max == b.p_max


def test_p5_sixteen_bit(tmp_path):
    path = tmp_path / "wide.pgm"
    samples = [0, 999, 500, 1]
    path.write_bytes(b"P5\n2 2\n1000\n"
                     + b"".join(struct.pack(">H", s) for s in samples))
    im = load_image(str(path))
    assert im.p_max == 1000.0
    np.testing.assert_array_equal(im.pixels().reshape(-1), samples)


def test_p5_truncated_payload(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x01")
    with pytest.raises(LoadError, match="payload"):
        load_image(str(path))


def test_pgm_sample_above_maxval(tmp_path):
    path = tmp_path / "hot.pgm"
    path.write_text("P2\n1 1\n10\n11\n")
    with pytest.raises(LoadError, match="maxval"):
        load_image(str(path))


@pytest.mark.parametrize("fmt", ["p2", "p5"])
@pytest.mark.parametrize("seed", range(4))
def test_save_round_trip_error_bounded(tmp_path, seed, fmt):
    rng = np.random.default_rng(seed)
    im = Image(Tensor3.from_array(rng.uniform(0, 255, size=(5, 4, 1))), 255.0)
    path = str(tmp_path / f"x_{fmt}.pgm")
    save_image(im, path, format=fmt)
    back = load_image(path)
    assert back.p_max == 255.0
    assert np.max(np.abs(back.pixels() - im.pixels())) <= 0.5


def test_save_all_zeros(tmp_path):
    im = Image(Tensor3.from_array(np.zeros((3, 3, 1))), 255.0)
    path = str(tmp_path / "zero.pgm")
    save_image(im, path)
    np.testing.assert_array_equal(load_image(path).pixels(), 0.0)


def test_save_sixteen_bit_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    im = Image(Tensor3.from_array(
        np.rint(rng.uniform(0, 1000, size=(3, 3, 1)))), 1000.0)
    path = str(tmp_path / "wide.pgm")
    save_image(im, path)
    back = load_image(path)
    np.testing.assert_array_equal(back.pixels(), im.pixels())


def test_save_multi_channel_rejected(tmp_path):
    im = Image(Tensor3.from_array(np.zeros((2, 2, 3))), 1.0)
    with pytest.raises(DomainError, match="channel"):
        save_image(im, str(tmp_path / "c.pgm"))


# ------------------------------------------------------------------ IDX


def _idx_images_bytes(arrs):
    n = len(arrs)
    h, w = arrs[0].shape
    payload = b"".join(a.astype(np.uint8).tobytes() for a in arrs)
    return struct.pack(">iiii", 2051, n, h, w) + payload


def test_idx_image_selection(tmp_path):
    rng = np.random.default_rng(3)
    arrs = [rng.integers(0, 256, size=(4, 3)) for _ in range(5)]
    path = tmp_path / "imgs.idx"
    path.write_bytes(_idx_images_bytes(arrs))
    first = load_image(str(path), index=0)
    last = load_image(str(path), index=4)
    assert first.p_max == 255.0
    np.testing.assert_array_equal(first.pixels()[:, :, 0], arrs[0])
    np.testing.assert_array_equal(last.pixels()[:, :, 0], arrs[4])
    with pytest.raises(LoadError, match="index"):
        load_image(str(path), index=5)


def test_idx_labels(tmp_path):
    labels = bytes([3, 1, 4, 1, 5])
    path = tmp_path / "labels.idx"
    path.write_bytes(struct.pack(">ii", 2049, 5) + labels)
    np.testing.assert_array_equal(load_idx_labels(str(path)), list(labels))
    with pytest.raises(LoadError, match="label"):
        load_image(str(path))


def test_idx_truncated(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">iiii", 2051, 2, 4, 4) + b"\x00" * 10)
    with pytest.raises(LoadError, match="truncated"):
        load_image(str(path), index=1)


def test_loaders_total_over_fuzzed_bytes(tmp_path):
    rng = np.random.default_rng(77)
    prefixes = [b"", b"P2", b"P5", b"P2\n", b"P5\n2 2\n255\n",
                struct.pack(">i", 2051), struct.pack(">i", 2049)]
    for i in range(150):
        blob = prefixes[i % len(prefixes)] + rng.bytes(int(rng.integers(0, 40)))
        path = tmp_path / f"fuzz_{i}"
        path.write_bytes(blob)
        try:
            load_image(str(path))
        except LoadError:
            pass


def test_network_loader_total_over_fuzzed_text(tmp_path):
    rng = np.random.default_rng(78)
    seeds = ['{"input_shape": [1,1,1]', '{"layers": []}', "[]", "1", '"x"',
             '{"input_shape": [1,1,1], "class_count": 2, "layers": [{}]}']
    for i in range(60):
        text = seeds[i % len(seeds)] + "".join(
            chr(c) for c in rng.integers(32, 127, size=int(rng.integers(0, 20))))
        path = tmp_path / f"fuzz_{i}.json"
        path.write_text(text)
        try:
            load_network(str(path))
        except (LoadError, DomainError):
            pass


# ------------------------------------------------------------------ specs and queries


@pytest.mark.parametrize("spec", [
    Photometric(0.9, 1.1, -0.1, 0.1),
    Translation.box(-1, 1, 0, 2),
    Translation(offsets=((0, 0), (2, -1))),
    Subsample(factors=(2, 3)),
    Zoom(factors=(2,)),
    Perturbation(radius=0.25),
])
def test_spec_document_round_trip(spec):
    assert spec_from_document(spec_to_document(spec)) == spec


def test_spec_document_translation_box():
    spec = spec_from_document({"kind": "translation", "box": [-1, 1, -1, 1]})
    assert len(spec.offsets) == 9


def test_spec_document_unknown_kind():
    with pytest.raises(LoadError, match="kind"):
        spec_from_document({"kind": "swirl"})


def test_query_document_full(tmp_path):
    rng = np.random.default_rng(12)
    net = _random_net(rng)
    save_network(net, str(tmp_path / "net.json"))
    im = Image(Tensor3.from_array(
        np.rint(rng.uniform(0, 255, size=(3, 3, 1)))), 255.0)
    save_image(im, str(tmp_path / "img.pgm"))
    doc = {
        "network": "net.json",
        "image": "img.pgm",
        "transformations": [{"kind": "translation", "box": [0, 1, 0, 0]}],
        "rho": 0.5,
        "solver": {"timeout_seconds": 30.0, "node_limit": 500},
    }
    qpath = tmp_path / "query.json"
    qpath.write_text(json.dumps(doc))
    query, config = load_query(str(qpath))
    assert query.perturbation_radius == 0.5
    assert len(query.transformations) == 1
    assert query.label == forward(net, query.image).label
    assert config.timeout_seconds == 30.0
    assert config.node_limit == 500


def test_query_document_normalize(tmp_path):
    rng = np.random.default_rng(13)
    net = _random_net(rng)
    save_network(net, str(tmp_path / "net.json"))
    im = Image(Tensor3.from_array(np.full((3, 3, 1), 200.0)), 255.0)
    save_image(im, str(tmp_path / "img.pgm"))
    doc = {"network": "net.json", "image": "img.pgm", "normalize": True}
    qpath = tmp_path / "query.json"
    qpath.write_text(json.dumps(doc))
    query, _ = load_query(str(qpath))
    assert query.image.p_max == 1.0
    np.testing.assert_allclose(query.image.pixels(), 200.0 / 255.0)


def test_query_document_missing_network(tmp_path):
    qpath = tmp_path / "query.json"
    qpath.write_text(json.dumps({"image": "img.pgm"}))
    with pytest.raises(LoadError, match="network"):
        load_query(str(qpath))


def test_query_document_bad_solver_option(tmp_path):
    rng = np.random.default_rng(14)
    net = _random_net(rng)
    save_network(net, str(tmp_path / "net.json"))
    im = Image(Tensor3.from_array(np.zeros((3, 3, 1))), 255.0)
    save_image(im, str(tmp_path / "img.pgm"))
    qpath = tmp_path / "query.json"
    qpath.write_text(json.dumps({"network": "net.json", "image": "img.pgm",
                                 "solver": {"cores": 4}}))
    with pytest.raises(LoadError, match="cores"):
        load_query(str(qpath))
