"""Command-line tests: exit codes, verdict text, file outputs, and the
batch report shape."""

import json

import numpy as np
import pytest

from transcheck.cli import (
    EXIT_INVALID,
    EXIT_IO,
    EXIT_NOT_ROBUST,
    EXIT_ROBUST,
    EXIT_UNDECIDED,
    EXIT_USAGE,
    main,
)
from transcheck.core import Image, Tensor3
from transcheck.io import load_image, save_image, save_network
from transcheck.network import ARGMAX, RELU, FullyConnectedLayer, Network, forward
from transcheck.transforms import Instantiation, Translation, apply_one


def _flip_net():
    """Two classes over a 2x1 byte image: logits (top pixel, 255 - top)."""
    w = np.array([[1.0, 0.0], [-1.0, 0.0]])
    b = np.array([0.0, 255.0])
    return Network(2, 1, 1, (FullyConnectedLayer(w, b, ARGMAX),), 2)


def _flip_image():
    return Image(Tensor3.from_array(np.array([[[230.0]], [[0.0]]])), 255.0)


@pytest.fixture
def flip_paths(tmp_path):
    net_path = tmp_path / "net.json"
    img_path = tmp_path / "img.pgm"
    save_network(_flip_net(), str(net_path))
    save_image(_flip_image(), str(img_path))
    return str(net_path), str(img_path)


def _verify_args(net, img, *extra):
    return ["verify", "--network", net, "--image", img, *extra]


# ------------------------------------------------------------------ verify


def test_verify_not_robust_exit_and_counterexample(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    ce = tmp_path / "ce.pgm"
    code = main(_verify_args(net, img, "--translate", "0,1,0,0",
                             "--counterexample", str(ce)))
    out = capsys.readouterr().out
    assert code == EXIT_NOT_ROBUST
    assert "NotRobust" in out
    assert "instantiation:" in out
    assert str(ce) in out
    replayed = load_image(str(ce))
    assert forward(_flip_net(), replayed).label == 2


def test_verify_identity_robust(flip_paths, capsys):
    net, img = flip_paths
    code = main(_verify_args(net, img, "--translate", "0,0,0,0"))
    assert code == EXIT_ROBUST
    assert capsys.readouterr().out.startswith("Robust")


def test_verify_timeout_undecided(flip_paths, capsys):
    net, img = flip_paths
    code = main(_verify_args(net, img, "--translate", "0,1,0,0",
                             "--timeout", "1e-9"))
    assert code == EXIT_UNDECIDED
    assert "Undecided: timeout" in capsys.readouterr().out


def test_verify_query_document(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    doc = {"network": "net.json", "image": "img.pgm",
           "transformations": [{"kind": "translation",
                                "box": [0, 1, 0, 0]}]}
    qpath = tmp_path / "q.json"
    qpath.write_text(json.dumps(doc))
    code = main(["verify", "--query", str(qpath),
                 "--counterexample", str(tmp_path / "ce.pgm")])
    assert code == EXIT_NOT_ROBUST
    assert "adversarial label: 2" in capsys.readouterr().out


def test_verify_query_excludes_inline_paths(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    qpath = tmp_path / "q.json"
    qpath.write_text(json.dumps({"network": "net.json", "image": "img.pgm"}))
    code = main(["verify", "--query", str(qpath), "--network", net])
    assert code == EXIT_USAGE
    assert "error" in capsys.readouterr().err


# ------------------------------------------------------------- exit codes


def test_missing_inputs_is_usage_error(capsys):
    assert main(["verify"]) == EXIT_USAGE
    capsys.readouterr()


def test_malformed_translate_is_usage_error(flip_paths, capsys):
    net, img = flip_paths
    assert main(_verify_args(net, img, "--translate", "a,b,c,d")) == EXIT_USAGE
    assert main(_verify_args(net, img, "--translate", "0,1")) == EXIT_USAGE
    capsys.readouterr()


def test_unknown_flag_exits_ten(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--no-such-flag"])
    assert exc.value.code == EXIT_USAGE
    capsys.readouterr()


def test_missing_file_exits_eleven(tmp_path, capsys):
    code = main(["verify", "--network", str(tmp_path / "absent.json"),
                 "--image", str(tmp_path / "absent.pgm")])
    assert code == EXIT_IO
    assert "error" in capsys.readouterr().err


def test_invalid_problem_exits_twelve(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    # photometric after translation is not encodable
    doc = {"network": "net.json", "image": "img.pgm",
           "transformations": [
               {"kind": "translation", "offsets": [[0, 0]]},
               {"kind": "photometric", "mu": [1.0, 1.0], "nu": [0.0, 0.0]}]}
    qpath = tmp_path / "q.json"
    qpath.write_text(json.dumps(doc))
    code = main(["verify", "--query", str(qpath)])
    assert code == EXIT_INVALID
    capsys.readouterr()


# ----------------------------------------------------------------- falsify


def test_falsify_agrees_with_verify(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    for box in ("0,0,0,0", "0,1,0,0"):
        v = main(_verify_args(net, img, "--translate", box,
                              "--counterexample", str(tmp_path / "v.pgm")))
        f = main(["falsify", "--network", net, "--image", img,
                  "--translate", box,
                  "--counterexample", str(tmp_path / "f.pgm")])
        assert v == f
    capsys.readouterr()


def test_falsify_random_nets_agree(tmp_path, capsys):
    rng = np.random.default_rng(7)
    for seed in range(3):
        net = Network(3, 3, 1, (
            FullyConnectedLayer(rng.normal(size=(5, 9)), rng.normal(size=5),
                                RELU),
            FullyConnectedLayer(rng.normal(size=(3, 5)), rng.normal(size=3),
                                ARGMAX),
        ), 3)
        im = Image(Tensor3.from_array(
            rng.integers(0, 256, size=(3, 3, 1)).astype(float)), 255.0)
        net_path = tmp_path / f"n{seed}.json"
        save_network(net, str(net_path))
        img_path = tmp_path / f"i{seed}.pgm"
        save_image(im, str(img_path))
        # leading "-" needs the = form or argparse reads it as a flag
        args_tail = ["--translate=-1,1,-1,1",
                     "--counterexample", str(tmp_path / "ce.pgm")]
        v = main(_verify_args(str(net_path), str(img_path), *args_tail))
        f = main(["falsify", "--network", str(net_path),
                  "--image", str(img_path), *args_tail])
        assert v == f
        assert v in (EXIT_ROBUST, EXIT_NOT_ROBUST)
    capsys.readouterr()


# --------------------------------------------------------------- transform


def test_transform_translate_matches_library(tmp_path, capsys):
    arr = np.arange(9, dtype=float).reshape(3, 3, 1) * 20.0
    im = Image(Tensor3.from_array(arr), 255.0)
    src = tmp_path / "src.pgm"
    dst = tmp_path / "dst.pgm"
    save_image(im, str(src))
    code = main(["transform", "--image", str(src), "--out", str(dst),
                 "--translate", "1,0"])
    assert code == 0
    expected = apply_one(im, Translation(offsets=((1, 0),)),
                         Instantiation(values=(1.0, 0.0)))
    got = load_image(str(dst))
    np.testing.assert_allclose(got.pixels(), expected.pixels(), atol=0.5)
    capsys.readouterr()


def test_transform_needs_exactly_one_flag(tmp_path, capsys):
    im = Image(Tensor3.from_array(np.zeros((2, 2, 1))), 255.0)
    src = tmp_path / "src.pgm"
    save_image(im, str(src))
    dst = str(tmp_path / "dst.pgm")
    assert main(["transform", "--image", str(src), "--out", dst]) == EXIT_USAGE
    assert main(["transform", "--image", str(src), "--out", dst,
                 "--translate", "0,0", "--zoom", "2"]) == EXIT_USAGE
    capsys.readouterr()


def test_transform_photometric(tmp_path, capsys):
    arr = np.full((2, 2, 1), 100.0)
    im = Image(Tensor3.from_array(arr), 255.0)
    src = tmp_path / "src.pgm"
    dst = tmp_path / "dst.pgm"
    save_image(im, str(src))
    code = main(["transform", "--image", str(src), "--out", str(dst),
                 "--photometric", "1.5,10"])
    assert code == 0
    got = load_image(str(dst))
    np.testing.assert_allclose(got.pixels(), np.full((2, 2, 1), 160.0))
    capsys.readouterr()


# ------------------------------------------------------------------ encode


def test_encode_is_deterministic_and_lp_shaped(flip_paths, tmp_path, capsys):
    net, img = flip_paths
    out_a = tmp_path / "a.lp"
    out_b = tmp_path / "b.lp"
    args = ["--translate", "0,1,0,0"]
    assert main(["encode", "--network", net, "--image", img,
                 "--out", str(out_a), *args]) == 0
    assert main(["encode", "--network", net, "--image", img,
                 "--out", str(out_b), *args]) == 0
    text = out_a.read_text()
    assert out_b.read_bytes() == out_a.read_bytes()
    assert text.startswith("Minimize")
    assert "Subject To" in text
    assert "Binaries" in text
    assert text.endswith("End\n")
    assert "wrote" in capsys.readouterr().out


# ------------------------------------------------------------------- batch


def _write_query_dir(tmp_path, boxes):
    qdir = tmp_path / "queries"
    qdir.mkdir()
    save_network(_flip_net(), str(tmp_path / "net.json"))
    save_image(_flip_image(), str(tmp_path / "img.pgm"))
    for i, box in enumerate(boxes):
        doc = {"network": "../net.json", "image": "../img.pgm",
               "transformations": [{"kind": "translation", "box": box}]}
        (qdir / f"q{i}.json").write_text(json.dumps(doc))
    return qdir


def test_batch_report_shape(tmp_path, capsys):
    qdir = _write_query_dir(tmp_path, [[0, 0, 0, 0], [0, 1, 0, 0]])
    report = tmp_path / "report.tsv"
    code = main(["batch", "--queries", str(qdir), "--report", str(report)])
    assert code == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "domain\tverified\tmean_s\tltr"
    assert len(lines) >= 2
    for line in lines[1:]:
        domain, verified, mean_s, ltr = line.split("\t")
        int(verified), float(mean_s), int(ltr)
    out = capsys.readouterr().out
    assert "domain" in out
    assert str(report) in out


def test_batch_jobs_flag_same_rows(tmp_path, capsys):
    qdir = _write_query_dir(tmp_path, [[0, 0, 0, 0], [0, 1, 0, 0]])
    r1 = tmp_path / "r1.tsv"
    r2 = tmp_path / "r2.tsv"
    assert main(["batch", "--queries", str(qdir), "--report", str(r1)]) == 0
    assert main(["batch", "--queries", str(qdir), "--report", str(r2),
                 "--jobs", "2"]) == 0
    first = [ln.split("\t") for ln in r1.read_text().splitlines()]
    second = [ln.split("\t") for ln in r2.read_text().splitlines()]
    # timings vary between runs; verdict columns must not
    assert [(r[0], r[1], r[3]) for r in first] == \
        [(r[0], r[1], r[3]) for r in second]
    capsys.readouterr()


def test_batch_empty_dir_exits_eleven(tmp_path, capsys):
    qdir = tmp_path / "queries"
    qdir.mkdir()
    code = main(["batch", "--queries", str(qdir),
                 "--report", str(tmp_path / "r.tsv")])
    assert code == EXIT_IO
    capsys.readouterr()


# ----------------------------------------------------------------- augment


def test_augment_exports_counterexamples(tmp_path, capsys):
    qdir = _write_query_dir(tmp_path, [[0, 0, 0, 0], [0, 1, 0, 0]])
    out_dir = tmp_path / "adv"
    code = main(["augment", "--outcomes", str(qdir), "--out", str(out_dir)])
    assert code == 0
    assert "wrote 1" in capsys.readouterr().out
    assert (out_dir / "adv_0000.pgm").exists()
    manifest = (out_dir / "manifest.tsv").read_text().splitlines()
    assert len(manifest) == 1
    name, orig, adv, inst = manifest[0].split("\t")
    assert name == "adv_0000.pgm"
    assert (orig, adv) == ("1", "2")
