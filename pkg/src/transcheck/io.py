"""Serialization: networks and queries as JSON text, images as PGM or IDX.

Every loader is total over file bytes: malformed input raises LoadError
with the path and the offending field, never an uncaught parse crash.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .core import DomainError, Image, Tensor3
from .encoder import VerificationQuery
from .network import (
    ARGMAX,
    RELU,
    ConvolutionalLayer,
    FullyConnectedLayer,
    Network,
    forward,
    require_valid,
)
from .solver import BranchingRule, SolverConfig
from .transforms import (
    Perturbation,
    Photometric,
    Subsample,
    TransformationSpec,
    Translation,
    Zoom,
)


class LoadError(ValueError):
    """A file failed to parse; the message names the path and context."""


def _fail(path: str, context: str) -> LoadError:
    return LoadError(f"{path}: {context}")


def _field(mapping, key, path, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise _fail(path, f"{where}: missing field '{key}'")
    return mapping[key]


def _reject_constant(value: str):
    raise ValueError(f"non-finite number {value!r}")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh, parse_constant=_reject_constant)
    except OSError as exc:
        raise _fail(path, f"cannot read: {exc}") from exc
    except (ValueError, UnicodeDecodeError) as exc:
        raise _fail(path, f"not valid JSON: {exc}") from exc


def _as_array(value, path, where, ndim):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise _fail(path, f"{where}: not a numeric array: {exc}") from exc
    if arr.ndim != ndim:
        raise _fail(path, f"{where}: expected a {ndim}-D array, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise _fail(path, f"{where}: contains non-finite values")
    return arr


# ------------------------------------------------------------------ networks


def network_to_document(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, ConvolutionalLayer):
            layers.append({
                "type": "conv",
                "kernels": layer.kernels.tolist(),
                "biases": layer.biases.tolist(),
                "pool": [layer.pool_height, layer.pool_width],
            })
        else:
            layers.append({
                "type": "fc",
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            })
    return {
        "input_shape": [net.input_height, net.input_width, net.input_channels],
        "class_count": net.class_count,
        "layers": layers,
    }


def network_from_document(doc, path: str = "<document>") -> Network:
    shape = _field(doc, "input_shape", path, "network")
    if not (isinstance(shape, list) and len(shape) == 3
            and all(isinstance(s, int) and s > 0 for s in shape)):
        raise _fail(path, "network: input_shape must be three positive integers")
    class_count = _field(doc, "class_count", path, "network")
    if not isinstance(class_count, int) or class_count < 1:
        raise _fail(path, "network: class_count must be a positive integer")
    raw_layers = _field(doc, "layers", path, "network")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise _fail(path, "network: layers must be a non-empty list")
    layers = []
    for i, entry in enumerate(raw_layers):
        where = f"layer {i}"
        kind = _field(entry, "type", path, where)
        try:
            if kind == "fc":
                activation = _field(entry, "activation", path, where)
                if activation not in (RELU, ARGMAX):
                    raise _fail(path, f"{where}: unknown activation {activation!r}")
                layers.append(FullyConnectedLayer(
                    _as_array(_field(entry, "weights", path, where), path, where, 2),
                    _as_array(_field(entry, "bias", path, where), path, where, 1),
                    activation))
            elif kind == "conv":
                pool = _field(entry, "pool", path, where)
                if not (isinstance(pool, list) and len(pool) == 2
                        and all(isinstance(p, int) and p > 0 for p in pool)):
                    raise _fail(path, f"{where}: pool must be two positive integers")
                layers.append(ConvolutionalLayer(
                    _as_array(_field(entry, "kernels", path, where), path, where, 4),
                    _as_array(_field(entry, "biases", path, where), path, where, 1),
                    pool[0], pool[1]))
            else:
                raise _fail(path, f"{where}: unknown layer type {kind!r}")
        except (DomainError, ValueError) as exc:
            if isinstance(exc, LoadError):
                raise
            raise _fail(path, f"{where}: {exc}") from exc
    net = Network(shape[0], shape[1], shape[2], tuple(layers), class_count)
    require_valid(net)
    return net


def load_network(path: str) -> Network:
    return network_from_document(_load_json(path), path)


def save_network(net: Network, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_document(net), fh)
        fh.write("\n")


# ------------------------------------------------------------------ images

_IDX_IMAGES = 2051
_IDX_LABELS = 2049


def _pgm_tokens(data: bytes, path: str):
    """Header tokens: whitespace-separated, '#' starts a comment line."""
    i = 0
    while True:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i] == ord("#"):
            while i < len(data) and data[i] != ord("\n"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise _fail(path, "truncated header")
        yield data[start:i].decode("ascii", errors="replace"), i
        i += 1


def _pgm_int(tokens, path, what) -> tuple[int, int]:
    try:
        text, end = next(tokens)
    except StopIteration:
        raise _fail(path, f"truncated header before {what}") from None
    try:
        value = int(text)
    except ValueError:
        raise _fail(path, f"{what}: not an integer: {text!r}") from None
    return value, end


def _load_pgm(data: bytes, path: str) -> Image:
    magic = data[:2].decode("ascii", errors="replace")
    tokens = _pgm_tokens(data[2:], path)
    width, _ = _pgm_int(tokens, path, "width")
    height, _ = _pgm_int(tokens, path, "height")
    maxval, end = _pgm_int(tokens, path, "maxval")
    if width <= 0 or height <= 0:
        raise _fail(path, f"bad dimensions {width}x{height}")
    if not (0 < maxval < 65536):
        raise _fail(path, f"maxval {maxval} outside 1..65535")
    count = width * height
    if magic == "P2":
        samples = []
        for _ in range(count):
            value, _ = _pgm_int(tokens, path, "sample")
            samples.append(value)
        arr = np.array(samples, dtype=np.float64)
    else:
        payload = data[2 + end + 1:]
        wide = maxval > 255
        need = count * (2 if wide else 1)
        if len(payload) < need:
            raise _fail(path, f"payload holds {len(payload)} bytes, need {need}")
        dtype = ">u2" if wide else np.uint8
        arr = np.frombuffer(payload[:need], dtype=dtype).astype(np.float64)
    if arr.size != count:
        raise _fail(path, f"expected {count} samples, got {arr.size}")
    if arr.max(initial=0) > maxval:
        raise _fail(path, f"sample {int(arr.max())} exceeds maxval {maxval}")
    if arr.min(initial=0) < 0:
        raise _fail(path, "negative sample")
    tensor = Tensor3.from_array(arr.reshape(height, width, 1))
    return Image(tensor, float(maxval))


def _load_idx_image(data: bytes, path: str, index: int) -> Image:
    if len(data) < 16:
        raise _fail(path, "truncated IDX header")
    magic, n, rows, cols = struct.unpack(">iiii", data[:16])
    if magic != _IDX_IMAGES:
        raise _fail(path, f"IDX magic {magic}, expected {_IDX_IMAGES} (images)")
    if min(n, rows, cols) <= 0:
        raise _fail(path, f"bad IDX dimensions {n}x{rows}x{cols}")
    if not (0 <= index < n):
        raise _fail(path, f"image index {index} outside 0..{n - 1}")
    size = rows * cols
    start = 16 + index * size
    chunk = data[start:start + size]
    if len(chunk) < size:
        raise _fail(path, f"truncated payload for image {index}")
    arr = np.frombuffer(chunk, dtype=np.uint8).astype(np.float64)
    return Image(Tensor3.from_array(arr.reshape(rows, cols, 1)), 255.0)


def load_idx_labels(path: str) -> np.ndarray:
    """All labels from an IDX label file, as stored (0-based digits)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise _fail(path, f"cannot read: {exc}") from exc
    if len(data) < 8:
        raise _fail(path, "truncated IDX header")
    magic, n = struct.unpack(">ii", data[:8])
    if magic != _IDX_LABELS:
        raise _fail(path, f"IDX magic {magic}, expected {_IDX_LABELS} (labels)")
    if n < 0 or len(data) < 8 + n:
        raise _fail(path, f"truncated payload: {n} labels declared")
    return np.frombuffer(data[8:8 + n], dtype=np.uint8).copy()


def load_image(path: str, index: int = 0) -> Image:
    """Auto-detects PGM (P2/P5) or IDX by magic bytes.

    index selects one image from an IDX file and is ignored for PGM.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise _fail(path, f"cannot read: {exc}") from exc
    magic2 = data[:2]
    if magic2 in (b"P2", b"P5"):
        try:
            return _load_pgm(data, path)
        except (DomainError, ValueError) as exc:
            if isinstance(exc, LoadError):
                raise
            raise _fail(path, str(exc)) from exc
    if len(data) >= 4 and struct.unpack(">i", data[:4])[0] in (_IDX_IMAGES,
                                                               _IDX_LABELS):
        magic = struct.unpack(">i", data[:4])[0]
        if magic == _IDX_LABELS:
            raise _fail(path, "IDX label file, not an image file")
        return _load_idx_image(data, path, index)
    raise _fail(path, "unrecognized format (not PGM or IDX)")


def save_image(im: Image, path: str, format: str = "p5") -> None:
    """Write a single-channel image as PGM, quantizing to the scale.

    The maxval is round(p_max), clamped to at least 1; samples above
    255 use the two-byte big-endian encoding.
    """
    if im.channels != 1:
        raise DomainError(f"PGM is single-channel, image has {im.channels}")
    if format not in ("p2", "p5"):
        raise DomainError(f"unknown format {format!r}")
    px = im.pixels()
    if px.min() < 0 or px.max() > im.p_max:
        raise DomainError("pixel values outside [0, p_max]")
    maxval = max(1, int(round(im.p_max)))
    samples = np.clip(np.rint(px[:, :, 0]), 0, maxval).astype(np.int64)
    header = f"{'P2' if format == 'p2' else 'P5'}\n{im.width} {im.height}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if format == "p2":
            lines = [" ".join(str(v) for v in row) for row in samples]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
        elif maxval > 255:
            fh.write(samples.astype(">u2").tobytes())
        else:
            fh.write(samples.astype(np.uint8).tobytes())


# ------------------------------------------------------------------ queries


def spec_to_document(spec: TransformationSpec) -> dict:
    if isinstance(spec, Photometric):
        return {"kind": "photometric", "mu": [spec.mu_lo, spec.mu_hi],
                "nu": [spec.nu_lo, spec.nu_hi]}
    if isinstance(spec, Translation):
        return {"kind": "translation",
                "offsets": [[tx, ty] for tx, ty in spec.offsets]}
    if isinstance(spec, Subsample):
        return {"kind": "subsample", "factors": list(spec.factors)}
    if isinstance(spec, Zoom):
        return {"kind": "zoom", "factors": list(spec.factors)}
    assert isinstance(spec, Perturbation)
    return {"kind": "perturbation", "radius": spec.radius}


def spec_from_document(doc, path: str = "<document>",
                       where: str = "transformation") -> TransformationSpec:
    kind = _field(doc, "kind", path, where)
    try:
        if kind == "photometric":
            mu = _field(doc, "mu", path, where)
            nu = _field(doc, "nu", path, where)
            return Photometric(float(mu[0]), float(mu[1]),
                               float(nu[0]), float(nu[1]))
        if kind == "translation":
            if "box" in doc:
                b = doc["box"]
                return Translation.box(int(b[0]), int(b[1]), int(b[2]), int(b[3]))
            offsets = _field(doc, "offsets", path, where)
            return Translation(offsets=tuple((int(o[0]), int(o[1]))
                                             for o in offsets))
        if kind == "subsample":
            return Subsample(factors=tuple(
                int(d) for d in _field(doc, "factors", path, where)))
        if kind == "zoom":
            return Zoom(factors=tuple(
                int(d) for d in _field(doc, "factors", path, where)))
        if kind == "perturbation":
            return Perturbation(radius=float(_field(doc, "radius", path, where)))
    except LoadError:
        raise
    except (DomainError, TypeError, ValueError, IndexError, KeyError) as exc:
        raise _fail(path, f"{where}: {exc}") from exc
    raise _fail(path, f"{where}: unknown kind {kind!r}")


def solver_config_from_document(doc, path: str = "<document>") -> SolverConfig:
    defaults = SolverConfig()
    if doc is None:
        return defaults
    if not isinstance(doc, dict):
        raise _fail(path, "solver: must be an object")
    known = {"timeout_seconds", "feasibility_tolerance",
             "integrality_tolerance", "branching_rule", "node_limit"}
    for key in doc:
        if key not in known:
            raise _fail(path, f"solver: unknown option {key!r}")
    try:
        rule = doc.get("branching_rule", defaults.branching_rule.value)
        return SolverConfig(
            timeout_seconds=float(doc.get("timeout_seconds",
                                          defaults.timeout_seconds)),
            feasibility_tolerance=float(doc.get("feasibility_tolerance",
                                                defaults.feasibility_tolerance)),
            integrality_tolerance=float(doc.get("integrality_tolerance",
                                                defaults.integrality_tolerance)),
            branching_rule=BranchingRule(rule),
            node_limit=(None if doc.get("node_limit") is None
                        else int(doc["node_limit"])),
        )
    except (TypeError, ValueError) as exc:
        raise _fail(path, f"solver: {exc}") from exc


def load_query(path: str) -> tuple[VerificationQuery, SolverConfig]:
    """A query document names a network file, an image file, a
    transformation list, and optional solver overrides.

    Relative file paths resolve against the document's directory.  When
    expected_label is omitted the network's own prediction is used.
    """
    doc = _load_json(path)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    net = load_network(resolve(_field(doc, "network", path, "query")))
    image_path = resolve(_field(doc, "image", path, "query"))
    index = doc.get("image_index", 0)
    if not isinstance(index, int) or index < 0:
        raise _fail(path, "query: image_index must be a non-negative integer")
    im = load_image(image_path, index=index)
    if doc.get("normalize", False):
        im = Image(Tensor3.from_array(im.pixels() / im.p_max), 1.0)

    raw_specs = doc.get("transformations", [])
    if not isinstance(raw_specs, list):
        raise _fail(path, "query: transformations must be a list")
    specs = tuple(spec_from_document(s, path, f"transformation {i}")
                  for i, s in enumerate(raw_specs))
    try:
        rho = float(doc.get("rho", 0.0))
    except (TypeError, ValueError) as exc:
        raise _fail(path, f"query: rho: {exc}") from exc

    label = doc.get("expected_label")
    if label is None:
        label = forward(net, im).label
    elif not isinstance(label, int):
        raise _fail(path, "query: expected_label must be an integer")
    try:
        query = VerificationQuery(net, im, label, specs, rho)
    except (DomainError, ValueError) as exc:
        raise _fail(path, f"query: {exc}") from exc
    config = solver_config_from_document(doc.get("solver"), path)
    return query, config
