"""CNN model representation and exact concrete forward inference.

The forward pass here is the ground truth against which solver output is
replayed: it is pure, deterministic, and records a full per-layer trace.
Class labels are 1-based ([1..c]); flat vector indices are 0-based.
Convolutions are valid-mode, stride 1; pooling windows are disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import DimensionError, Image, Tensor3, reshape_to_vector

RELU = "relu"
ARGMAX = "argmax"


@dataclass(frozen=True)
class FullyConnectedLayer:
    """Dense layer: out = activation(W @ x + b)."""

    weights: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)
    activation: str = RELU

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1:
            raise DimensionError("weights must be 2-D and bias 1-D")
        if w.shape[0] != b.shape[0]:
            raise DimensionError(
                f"weight rows ({w.shape[0]}) must equal bias length ({b.shape[0]})"
            )
        if self.activation not in (RELU, ARGMAX):
            raise ValueError(f"unknown activation {self.activation!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ConvolutionalLayer:
    """Convolution group + ReLU + disjoint max-pooling.

    kernels has shape (k, p, q, in_channels); one bias per kernel.
    """

    kernels: np.ndarray = field(repr=False)
    biases: np.ndarray = field(repr=False)
    pool_height: int = 1
    pool_width: int = 1

    def __post_init__(self) -> None:
        k = np.asarray(self.kernels, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if k.ndim != 4:
            raise DimensionError("kernels must have shape (k, p, q, in_channels)")
        if k.shape[0] < 1:
            raise DimensionError("need at least one kernel")
        if b.ndim != 1 or b.shape[0] != k.shape[0]:
            raise DimensionError(
                f"need one bias per kernel: {b.shape[0]} biases for {k.shape[0]} kernels"
            )
        if self.pool_height < 1 or self.pool_width < 1:
            raise DimensionError("pool sizes must be positive")
        k.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "biases", b)

    @property
    def kernel_count(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_height(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_width(self) -> int:
        return self.kernels.shape[2]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[3]

    def conv_output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        h, w, _ = in_shape
        return (h - self.kernel_height + 1, w - self.kernel_width + 1, self.kernel_count)

    def output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        ch, cw, k = self.conv_output_shape(in_shape)
        return (ch // self.pool_height, cw // self.pool_width, k)


Layer = Union[FullyConnectedLayer, ConvolutionalLayer]


@dataclass(frozen=True)
class Network:
    """Ordered stack of layers over a fixed input shape.

    The final layer must be fully connected with argmax activation and
    class_count outputs; every other layer applies ReLU.
    """

    input_height: int
    input_width: int
    input_channels: int
    layers: tuple[Layer, ...]
    class_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_height, self.input_width, self.input_channels)

    @property
    def input_size(self) -> int:
        return self.input_height * self.input_width * self.input_channels

    def layer_input_shapes(self) -> list[tuple[int, int, int] | int]:
        """Shape flowing into each layer: (h, w, c) tuples or flat sizes.

        Best effort: stops tracking through layers with inconsistent
        shapes (validate reports those precisely).
        """
        shapes: list[tuple[int, int, int] | int] = []
        current: tuple[int, int, int] | int = self.input_shape
        for layer in self.layers:
            shapes.append(current)
            if isinstance(layer, ConvolutionalLayer):
                if isinstance(current, tuple):
                    current = layer.output_shape(current)
                else:
                    current = -1 if not isinstance(current, int) else current
            else:
                current = layer.out_size
        return shapes


def _flat_size(shape: tuple[int, int, int] | int) -> int:
    if isinstance(shape, tuple):
        return shape[0] * shape[1] * shape[2]
    return shape


def validate(net: Network) -> list[str]:
    """Check the full layer chain; returns the complete list of violations.

    Empty list means the network is well formed.
    """
    errors: list[str] = []
    if min(net.input_shape) < 1:
        errors.append(f"input shape {net.input_shape} must be positive")
    if net.class_count < 1:
        errors.append(f"class_count must be positive, got {net.class_count}")
    if not net.layers:
        errors.append("network has no layers")
        return errors

    current: tuple[int, int, int] | int = net.input_shape
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvolutionalLayer):
            if not isinstance(current, tuple):
                errors.append(
                    f"layer {i}: convolution needs a spatial input, got flat size {current}"
                )
                current = -1
                continue
            h, w, c = current
            if layer.kernel_height > h or layer.kernel_width > w:
                errors.append(
                    f"layer {i}: kernel {layer.kernel_height}x{layer.kernel_width} "
                    f"exceeds input {h}x{w}"
                )
            if layer.in_channels != c:
                errors.append(
                    f"layer {i}: kernel channels {layer.in_channels} != input channels {c}"
                )
            ch, cw, _ = layer.conv_output_shape(current)
            if ch < 1 or cw < 1:
                current = -1
                continue
            if ch % layer.pool_height != 0:
                errors.append(
                    f"layer {i}: conv height {ch} not divisible by pool height {layer.pool_height}"
                )
            if cw % layer.pool_width != 0:
                errors.append(
                    f"layer {i}: conv width {cw} not divisible by pool width {layer.pool_width}"
                )
            if i == last:
                errors.append(f"layer {i}: final layer must be fully connected with argmax")
            current = layer.output_shape(current)
        else:
            if layer.in_size != _flat_size(current):
                errors.append(
                    f"layer {i}: weights expect {layer.in_size} inputs, "
                    f"previous layer provides {_flat_size(current)}"
                )
            if i == last:
                if layer.activation != ARGMAX:
                    errors.append(f"layer {i}: final layer must use argmax activation")
                if layer.out_size != net.class_count:
                    errors.append(
                        f"layer {i}: final layer size {layer.out_size} != "
                        f"class_count {net.class_count}"
                    )
            elif layer.activation == ARGMAX:
                errors.append(f"layer {i}: argmax is only legal on the final layer")
            current = layer.out_size
    return errors


def require_valid(net: Network) -> None:
    errors = validate(net)
    if errors:
        raise DimensionError("invalid network: " + "; ".join(errors))


def fc_linear(layer: FullyConnectedLayer, x: np.ndarray) -> np.ndarray:
    """Weighted sum W @ x + b."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.in_size,):
        raise DimensionError(
            f"input length {x.shape} does not match layer in_size {layer.in_size}"
        )
    return layer.weights @ x + layer.bias


def relu(v: np.ndarray) -> np.ndarray:
    """Element-wise max(0, x)."""
    return np.maximum(0.0, np.asarray(v, dtype=np.float64))


def conv_linear(layer: ConvolutionalLayer, t: Tensor3) -> Tensor3:
    """Valid-mode stride-1 convolution of every kernel plus its bias.

    Output entry (u, v, j) is the inner product of kernel j with the
    input window whose top-left corner sits at (u, v), over all
    channels.
    """
    if layer.in_channels != t.channels:
        raise DimensionError(
            f"kernel channels {layer.in_channels} != input channels {t.channels}"
        )
    p, q = layer.kernel_height, layer.kernel_width
    if p > t.height or q > t.width:
        raise DimensionError(
            f"kernel {p}x{q} exceeds input {t.height}x{t.width}"
        )
    oh, ow = t.height - p + 1, t.width - q + 1
    windows = np.lib.stride_tricks.sliding_window_view(t.data, (p, q), axis=(0, 1))
    # windows: (oh, ow, c, p, q) -> contract with kernels (k, p, q, c)
    out = np.einsum("uvcpq,kpqc->uvk", windows, layer.kernels, optimize=True)
    out = out + layer.biases[np.newaxis, np.newaxis, :]
    return Tensor3(out)


def maxpool(t: Tensor3, pool_height: int, pool_width: int) -> Tensor3:
    """Disjoint-window maximum over pool_height x pool_width blocks."""
    if t.height % pool_height != 0 or t.width % pool_width != 0:
        raise DimensionError(
            f"shape {t.shape} not divisible by pool {pool_height}x{pool_width}"
        )
    oh, ow = t.height // pool_height, t.width // pool_width
    blocks = t.data.reshape(oh, pool_height, ow, pool_width, t.channels)
    return Tensor3(blocks.max(axis=(1, 3)))


@dataclass(frozen=True)
class LayerTrace:
    """Per-layer activations recorded by a forward pass.

    linear is the weighted sum (FC) or convolution output (conv);
    activated is the post-ReLU value (absent on the argmax layer);
    pooled is the max-pool output (conv layers only).
    """

    linear: np.ndarray | Tensor3
    activated: np.ndarray | Tensor3 | None = None
    pooled: Tensor3 | None = None


@dataclass(frozen=True)
class ForwardResult:
    label: int
    logits: np.ndarray
    trace: tuple[LayerTrace, ...]


def forward(net: Network, im: Image) -> ForwardResult:
    """Run the network on an image.

    Returns the 1-based predicted label (ties broken toward the lowest
    class index), the final-layer weighted sums, and the full trace.
    """
    require_valid(net)
    if im.shape != net.input_shape:
        raise DimensionError(
            f"image shape {im.shape} does not match network input {net.input_shape}"
        )
    current: Tensor3 | np.ndarray = im.data
    traces: list[LayerTrace] = []
    logits: np.ndarray | None = None
    for layer in net.layers:
        if isinstance(layer, ConvolutionalLayer):
            assert isinstance(current, Tensor3)
            lin = conv_linear(layer, current)
            act = Tensor3(relu(lin.data))
            pooled = maxpool(act, layer.pool_height, layer.pool_width)
            traces.append(LayerTrace(linear=lin, activated=act, pooled=pooled))
            current = pooled
        else:
            vec = reshape_to_vector(current) if isinstance(current, Tensor3) else current
            lin = fc_linear(layer, vec)
            if layer.activation == ARGMAX:
                traces.append(LayerTrace(linear=lin))
                logits = lin
            else:
                act = relu(lin)
                traces.append(LayerTrace(linear=lin, activated=act))
                current = act
    assert logits is not None
    label = int(np.argmax(logits)) + 1  # argmax returns the first maximum
    return ForwardResult(label=label, logits=logits, trace=tuple(traces))
