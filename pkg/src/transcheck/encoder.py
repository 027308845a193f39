"""Compilation of a verification query into a MILP feasibility model.

A query bundles a network, a correctly classified image, an ordered
transformation sequence, and a perturbation radius.  The encoder pins
the input pixels to the image (family C_im), walks the transformation
layers in order, always appends a perturbation layer, encodes every
network layer, and finishes with the misclassification block.  The
model is feasible exactly when some admissible parameter choice plus
perturbation flips the classifier away from the query label, with logit
ties counting as flips.

Family tags carried by the constraints:
  C1        parameter range rows (one pair per degree of freedom)
  C2        photometric pixel rows out = mu * pixel + nu
  C3, C4    one-hot selector and its link to the parameter variables
  C5/C6/C7  translation / subsample / zoom pixel rows, linearized
            disjunctively: t >= e_d - M(1-delta_d), t <= e_d + M(1-delta_d)
  C8, C9    perturbation band rows out - in <= rho, out - in >= -rho
  C10, C15  dense and convolution weighted-sum equalities
  C11..C14  ReLU rows (binary per provably unstable node only)
  C16..C18  maxpool rows with binary position codes plus exclusions
  C19, C20  misclassification rows over output codes plus exclusions
  C_im      input pixel pinning

Big-M values come from per-node interval bound propagation, never from
a global constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, DomainError, Image, Tensor3
from .milp import EQ, GE, LE, LinearExpr, MilpModel, VarId
from .network import (
    ARGMAX,
    ConvolutionalLayer,
    FullyConnectedLayer,
    Network,
    forward,
    require_valid,
)
from .transforms import (
    Perturbation,
    Photometric,
    Subsample,
    TransformationSpec,
    Translation,
    Zoom,
    check_spec_for_image,
    enumerate_instantiations,
)


class UnsupportedCompositionError(ValueError):
    """The transformation sequence cannot be expressed linearly."""


@dataclass(frozen=True)
class VerificationQuery:
    """What to verify: is the label stable over the whole domain?"""

    network: Network
    image: Image
    label: int
    transformations: tuple[TransformationSpec, ...] = ()
    perturbation_radius: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "transformations", tuple(self.transformations))
        if not np.isfinite(self.perturbation_radius) or self.perturbation_radius < 0:
            raise DomainError("perturbation radius must be a finite value >= 0")
        if not (1 <= self.label <= self.network.class_count):
            raise DomainError(
                f"label {self.label} outside 1..{self.network.class_count}")


def validate_query(query: VerificationQuery) -> None:
    """Hard errors for malformed queries; a wrong label only warns."""
    require_valid(query.network)
    if query.image.shape != query.network.input_shape:
        raise DimensionError(
            f"image shape {query.image.shape} != network input {query.network.input_shape}")
    if query.network.class_count < 2:
        raise DomainError("robustness needs at least two classes")
    h, w = query.image.height, query.image.width
    for k, spec in enumerate(query.transformations):
        check_spec_for_image(spec, h, w)
        if isinstance(spec, Photometric) and k > 0:
            raise UnsupportedCompositionError(
                "photometric transformations must come first: applied to a "
                "symbolic input the contrast term becomes a product of variables")
    predicted = forward(query.network, query.image).label
    if predicted != query.label:
        warnings.warn(
            f"query label {query.label} but the network outputs {predicted}",
            stacklevel=2)


Bounds = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class NodeBounds:
    """Per-node intervals for every stage, shaped like the data flow.

    Image stages hold (h, w, c) arrays; dense stages hold flat arrays.
    These feed both variable bounds and the big-M coefficients.
    """

    input: Bounds
    transforms: tuple[Bounds, ...]
    perturbation: Bounds
    linear: tuple[Bounds, ...]
    activated: tuple[Bounds | None, ...]
    pooled: tuple[Bounds | None, ...]


def _interval_affine(weights: np.ndarray, bias: np.ndarray,
                     lo: np.ndarray, hi: np.ndarray) -> Bounds:
    wp = np.maximum(weights, 0.0)
    wn = np.minimum(weights, 0.0)
    return wp @ lo + wn @ hi + bias, wp @ hi + wn @ lo + bias


def _interval_conv(layer: ConvolutionalLayer, lo: np.ndarray, hi: np.ndarray) -> Bounds:
    p, q = layer.kernel_height, layer.kernel_width
    kp = np.maximum(layer.kernels, 0.0)
    kn = np.minimum(layer.kernels, 0.0)
    wlo = np.lib.stride_tricks.sliding_window_view(lo, (p, q), axis=(0, 1))
    whi = np.lib.stride_tricks.sliding_window_view(hi, (p, q), axis=(0, 1))
    out_lo = (np.einsum("uvcpq,kpqc->uvk", wlo, kp, optimize=True)
              + np.einsum("uvcpq,kpqc->uvk", whi, kn, optimize=True) + layer.biases)
    out_hi = (np.einsum("uvcpq,kpqc->uvk", whi, kp, optimize=True)
              + np.einsum("uvcpq,kpqc->uvk", wlo, kn, optimize=True) + layer.biases)
    return out_lo, out_hi


def _interval_pool(lo: np.ndarray, hi: np.ndarray, ph: int, pw: int) -> Bounds:
    h, w, c = lo.shape
    shape = (h // ph, ph, w // pw, pw, c)
    return lo.reshape(shape).max(axis=(1, 3)), hi.reshape(shape).max(axis=(1, 3))


def _shifted(values: np.ndarray, tx: int, ty: int) -> np.ndarray:
    """output(u, v) = values(u + tx, v + ty), zero outside."""
    h, w = values.shape[:2]
    out = np.zeros_like(values)
    u_lo, u_hi = max(0, -tx), min(h, h - tx)
    v_lo, v_hi = max(0, -ty), min(w, w - ty)
    out[u_lo:u_hi, v_lo:v_hi] = values[u_lo + tx:u_hi + tx, v_lo + ty:v_hi + ty]
    return out


def _block_mean(values: np.ndarray, d: int) -> np.ndarray:
    h, w, c = values.shape
    hb, wb = h // d, w // d
    out = np.zeros_like(values)
    out[:hb, :wb] = values[: hb * d, : wb * d].reshape(hb, d, wb, d, c).mean(axis=(1, 3))
    return out


def _replicated(values: np.ndarray, d: int) -> np.ndarray:
    h, w = values.shape[:2]
    return np.repeat(np.repeat(values, d, axis=0), d, axis=1)[:h, :w]


def _union_over(images: list[Bounds]) -> Bounds:
    lo = np.minimum.reduce([b[0] for b in images])
    hi = np.maximum.reduce([b[1] for b in images])
    return lo, hi


def _transform_interval(spec: TransformationSpec, lo: np.ndarray, hi: np.ndarray,
                        p_max: float, rho_default: float = 0.0) -> Bounds:
    if isinstance(spec, Photometric):
        corners_lo = [spec.mu_lo * lo, spec.mu_lo * hi, spec.mu_hi * lo, spec.mu_hi * hi]
        stacked = np.stack(corners_lo)
        out_lo = stacked.min(axis=0) + spec.nu_lo
        out_hi = stacked.max(axis=0) + spec.nu_hi
        return np.clip(out_lo, 0.0, p_max), np.clip(out_hi, 0.0, p_max)
    if isinstance(spec, Translation):
        return _union_over([(_shifted(lo, tx, ty), _shifted(hi, tx, ty))
                            for tx, ty in spec.offsets])
    if isinstance(spec, Subsample):
        return _union_over([(_block_mean(lo, d), _block_mean(hi, d))
                            for d in spec.factors])
    if isinstance(spec, Zoom):
        return _union_over([(_replicated(lo, d), _replicated(hi, d))
                            for d in spec.factors])
    assert isinstance(spec, Perturbation)
    rho = spec.radius
    return np.clip(lo - rho, 0.0, p_max), np.clip(hi + rho, 0.0, p_max)


_ENUMERATION_CAP = 512


def _member_bounds(members: list[np.ndarray]) -> Bounds:
    stack = np.stack(members)
    return stack.min(axis=0), stack.max(axis=0)


def _enumerated_members(spec: TransformationSpec,
                        members: list[np.ndarray]) -> list[np.ndarray] | None:
    """Every output image a finite stage can produce, or None when the
    stage has a continuous parameter."""
    if isinstance(spec, Translation):
        return [_shifted(m, tx, ty) for m in members for tx, ty in spec.offsets]
    if isinstance(spec, Subsample):
        return [_block_mean(m, d) for m in members for d in spec.factors]
    if isinstance(spec, Zoom):
        return [_replicated(m, d) for m in members for d in spec.factors]
    if isinstance(spec, Perturbation) and spec.radius == 0.0:
        return members
    return None


def _as_plain(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor3) else x, dtype=np.float64)


def _trace_bounds(query: VerificationQuery) -> NodeBounds | None:
    """Exact per-node ranges by replaying every member of a finite
    transformation lattice through the network.

    Integer-feasible points of the compiled model pin each variable to
    its value under one member, so the elementwise min/max over member
    traces is the exact reachable range: variable bounds and big-M
    coefficients built from it keep every integer solution and only cut
    fractional ones.  Returns None when the chain has a continuous
    stage (photometric, nonzero perturbation) or outgrows the
    enumeration cap.
    """
    if query.perturbation_radius != 0.0:
        return None
    members = [query.image.pixels().copy()]
    transforms: list[Bounds] = []
    for spec in query.transformations:
        members = _enumerated_members(spec, members)
        if members is None or len(members) > _ENUMERATION_CAP:
            return None
        transforms.append(_member_bounds(members))
    pert = _member_bounds(members)

    traces = [forward(query.network,
                      Image(Tensor3.from_array(m), query.image.p_max)).trace
              for m in members]
    linear: list[Bounds] = []
    activated: list[Bounds | None] = []
    pooled: list[Bounds | None] = []
    for li, layer in enumerate(query.network.layers):
        linear.append(_member_bounds([_as_plain(t[li].linear) for t in traces]))
        if isinstance(layer, ConvolutionalLayer):
            activated.append(_member_bounds(
                [_as_plain(t[li].activated) for t in traces]))
            pooled.append(_member_bounds(
                [_as_plain(t[li].pooled) for t in traces]))
        elif layer.activation == ARGMAX:
            activated.append(None)
            pooled.append(None)
        else:
            activated.append(_member_bounds(
                [_as_plain(t[li].activated) for t in traces]))
            pooled.append(None)
    px = query.image.pixels()
    return NodeBounds(
        input=(px.copy(), px.copy()),
        transforms=tuple(transforms),
        perturbation=pert,
        linear=tuple(linear),
        activated=tuple(activated),
        pooled=tuple(pooled),
    )


def propagate_bounds(query: VerificationQuery, *, anchor_to_image: bool = True) -> NodeBounds:
    """Interval sweep through every stage of the compiled problem.

    anchor_to_image starts from the exact pixel values (the input layer
    is pinned anyway), giving much tighter intervals; False starts from
    the whole [0, p_max] box.  When the whole chain is a finite lattice
    the anchored path replays every member instead, which is exact per
    node.
    """
    im = query.image
    p_max = im.p_max
    if anchor_to_image:
        traced = _trace_bounds(query)
        if traced is not None:
            return traced
        in_lo = im.pixels().copy()
        in_hi = im.pixels().copy()
    else:
        in_lo = np.zeros(im.shape)
        in_hi = np.full(im.shape, p_max)
    lo, hi = in_lo, in_hi
    transforms: list[Bounds] = []
    for spec in query.transformations:
        lo, hi = _transform_interval(spec, lo, hi, p_max)
        transforms.append((lo, hi))
    rho = query.perturbation_radius
    pert = (np.clip(lo - rho, 0.0, p_max), np.clip(hi + rho, 0.0, p_max))
    lo, hi = pert

    linear: list[Bounds] = []
    activated: list[Bounds | None] = []
    pooled: list[Bounds | None] = []
    for layer in query.network.layers:
        if isinstance(layer, ConvolutionalLayer):
            ws_lo, ws_hi = _interval_conv(layer, lo, hi)
            linear.append((ws_lo, ws_hi))
            act = (np.maximum(ws_lo, 0.0), np.maximum(ws_hi, 0.0))
            activated.append(act)
            pl = _interval_pool(act[0], act[1], layer.pool_height, layer.pool_width)
            pooled.append(pl)
            lo, hi = pl
        else:
            flat_lo = lo.reshape(-1) if lo.ndim == 3 else lo
            flat_hi = hi.reshape(-1) if hi.ndim == 3 else hi
            ws = _interval_affine(layer.weights, layer.bias, flat_lo, flat_hi)
            linear.append(ws)
            if layer.activation == ARGMAX:
                activated.append(None)
                pooled.append(None)
                lo, hi = ws
            else:
                act = (np.maximum(ws[0], 0.0), np.maximum(ws[1], 0.0))
                activated.append(act)
                pooled.append(None)
                lo, hi = act
    return NodeBounds(
        input=(in_lo, in_hi),
        transforms=tuple(transforms),
        perturbation=pert,
        linear=tuple(linear),
        activated=tuple(activated),
        pooled=tuple(pooled),
    )


@dataclass(frozen=True)
class TransformVars:
    """Model variables belonging to one transformation layer."""

    spec: TransformationSpec
    lambdas: tuple[VarId, ...]
    selectors: tuple[VarId, ...]
    instantiations: tuple[tuple[float, ...], ...]
    outputs: tuple[VarId, ...]


@dataclass(frozen=True)
class LayerVars:
    """Model variables belonging to one network layer."""

    linear: tuple[VarId, ...]
    activated: tuple[VarId, ...] | None
    pooled: tuple[VarId, ...] | None
    relu_binaries: dict[int, VarId]
    pool_codes: tuple[tuple[VarId, ...], ...] | None


@dataclass(frozen=True)
class VariableMap:
    """Total two-way map between problem nodes and model variables."""

    input_pixels: tuple[VarId, ...]
    transforms: tuple[TransformVars, ...]
    perturbation_outputs: tuple[VarId, ...]
    layers: tuple[LayerVars, ...]
    output_codes: tuple[VarId, ...]
    claimed_tags: frozenset[str]

    def describe(self, var: VarId) -> str:
        """Human-readable location of a variable in the data flow."""
        table = self._reverse()
        return table.get(var, f"unknown variable {var.name}")

    def _reverse(self) -> dict[VarId, str]:
        table: dict[VarId, str] = {}
        for i, v in enumerate(self.input_pixels):
            table[v] = f"input pixel {i}"
        for k, tv in enumerate(self.transforms):
            for j, v in enumerate(tv.lambdas):
                table[v] = f"transform {k} parameter {j}"
            for j, v in enumerate(tv.selectors):
                table[v] = f"transform {k} selector {tv.instantiations[j]}"
            for j, v in enumerate(tv.outputs):
                table[v] = f"transform {k} output {j}"
        for i, v in enumerate(self.perturbation_outputs):
            table[v] = f"perturbed pixel {i}"
        for li, lv in enumerate(self.layers):
            for j, v in enumerate(lv.linear):
                table[v] = f"layer {li} weighted sum {j}"
            for j, v in enumerate(lv.activated or ()):
                table[v] = f"layer {li} activation {j}"
            for j, v in enumerate(lv.pooled or ()):
                table[v] = f"layer {li} pooled {j}"
            for j, v in lv.relu_binaries.items():
                table[v] = f"layer {li} activation sign {j}"
            for j, codes in enumerate(lv.pool_codes or ()):
                for b, v in enumerate(codes):
                    table[v] = f"layer {li} pool code {j} bit {b}"
        for b, v in enumerate(self.output_codes):
            table[v] = f"output code bit {b}"
        return table


def _dof_values(spec: TransformationSpec) -> tuple[tuple[str, float, float], ...]:
    """(name, low, high) per degree of freedom."""
    if isinstance(spec, Photometric):
        return (("mu", spec.mu_lo, spec.mu_hi), ("nu", spec.nu_lo, spec.nu_hi))
    if isinstance(spec, Translation):
        txs = [t for t, _ in spec.offsets]
        tys = [t for _, t in spec.offsets]
        return (("tx", float(min(txs)), float(max(txs))),
                ("ty", float(min(tys)), float(max(tys))))
    if isinstance(spec, (Subsample, Zoom)):
        return (("d", float(min(spec.factors)), float(max(spec.factors))),)
    return ()


def encode_dof_bounds(model: MilpModel, spec: TransformationSpec,
                      prefix: str) -> tuple[VarId, ...]:
    """C1: one bounded parameter variable per degree of freedom."""
    lambdas = []
    for name, lo, hi in _dof_values(spec):
        lam = model.add_continuous(f"{prefix}_{name}", lo, hi)
        model.add_constraint(LinearExpr.of(lam), GE, lo, "C1")
        model.add_constraint(LinearExpr.of(lam), LE, hi, "C1")
        lambdas.append(lam)
    return tuple(lambdas)


def encode_selector(model: MilpModel, spec: TransformationSpec,
                    lambdas: tuple[VarId, ...], prefix: str
                    ) -> tuple[tuple[VarId, ...], tuple[tuple[float, ...], ...]]:
    """C3 + C4: one-hot choice binaries tied to the parameter variables."""
    insts = tuple(inst.values for inst in enumerate_instantiations(spec))
    deltas = tuple(model.add_binary(f"{prefix}_{i}") for i in range(len(insts)))
    model.add_constraint(LinearExpr(tuple((1.0, d) for d in deltas)), EQ, 1.0, "C3")
    for j, lam in enumerate(lambdas):
        terms = tuple((insts[i][j], deltas[i]) for i in range(len(insts)))
        model.add_constraint(LinearExpr(terms + ((-1.0, lam),)), EQ, 0.0, "C4")
    return deltas, insts


def encode_photometric(model: MilpModel, spec: Photometric, image: Image,
                       out_bounds: Bounds, prefix: str
                       ) -> tuple[tuple[VarId, ...], tuple[VarId, ...]]:
    """C1 + C2: out = mu * pixel + nu over the constant input pixels."""
    lambdas = encode_dof_bounds(model, spec, f"{prefix}lam")
    lam_mu, lam_nu = lambdas
    pixels = image.pixels().reshape(-1)
    lo, hi = out_bounds[0].reshape(-1), out_bounds[1].reshape(-1)
    outs = []
    for i, value in enumerate(pixels):
        out = model.add_continuous(f"{prefix}px_{i}", lo[i], hi[i])
        expr = LinearExpr(((1.0, out), (-float(value), lam_mu), (-1.0, lam_nu)))
        model.add_constraint(expr, EQ, 0.0, "C2")
        outs.append(out)
    return tuple(outs), lambdas


def _disjunctive_rows(model: MilpModel, out: VarId, big_m: float,
                      exprs: list[LinearExpr], deltas: tuple[VarId, ...],
                      tag: str) -> None:
    # out >= e_d - M(1-delta_d) and out <= e_d + M(1-delta_d): equality
    # when delta_d = 1, slack of width M otherwise
    for e, delta in zip(exprs, deltas):
        neg = tuple((-c, v) for c, v in e.terms)
        low = LinearExpr(((1.0, out), (-big_m, delta)) + neg)
        model.add_constraint(low, GE, e.constant - big_m, tag)
        high = LinearExpr(((1.0, out), (big_m, delta)) + neg)
        model.add_constraint(high, LE, e.constant + big_m, tag)


def _disjunctive_family(model: MilpModel, spec: TransformationSpec,
                        exprs_per_inst, shape: tuple[int, int, int],
                        out_bounds: Bounds, prefix: str, tag: str
                        ) -> tuple[tuple[VarId, ...], tuple[VarId, ...],
                                   tuple[VarId, ...], tuple[tuple[float, ...], ...]]:
    lambdas = encode_dof_bounds(model, spec, f"{prefix}lam")
    deltas, insts = encode_selector(model, spec, lambdas, f"{prefix}sel")
    h, w, c = shape
    lo = out_bounds[0].reshape(-1)
    hi = out_bounds[1].reshape(-1)
    outs = []
    for flat in range(h * w * c):
        out = model.add_continuous(f"{prefix}px_{flat}", lo[flat], hi[flat])
        exprs = [exprs_per_inst(values, flat) for values in insts]
        _disjunctive_rows(model, out, float(hi[flat] - lo[flat]), exprs, deltas, tag)
        outs.append(out)
    return tuple(outs), lambdas, deltas, insts


def encode_translation(model: MilpModel, spec: Translation,
                       in_vars: tuple[VarId, ...], shape: tuple[int, int, int],
                       out_bounds: Bounds, prefix: str) -> tuple:
    """C1 + C3 + C4 + C5: shifted copies selected by the one-hot code.

    The shifted source for offset (t_x, t_y) at output (u, v) is the
    input variable at (u + t_x, v + t_y), or the constant 0 off-image.
    """
    h, w, c = shape

    def source(values, flat):
        tx, ty = int(values[0]), int(values[1])
        ch = flat % c
        u, v = divmod(flat // c, w)
        su, sv = u + tx, v + ty
        if 0 <= su < h and 0 <= sv < w:
            return LinearExpr.of(in_vars[(su * w + sv) * c + ch])
        return LinearExpr(constant=0.0)

    return _disjunctive_family(model, spec, source, shape, out_bounds, prefix, "C5")


def encode_subsample(model: MilpModel, spec: Subsample,
                     in_vars: tuple[VarId, ...], shape: tuple[int, int, int],
                     out_bounds: Bounds, prefix: str) -> tuple:
    """C1 + C3 + C4 + C6: block means parked top-left, selected one-hot."""
    h, w, c = shape

    def source(values, flat):
        d = int(values[0])
        ch = flat % c
        u, v = divmod(flat // c, w)
        if u < h // d and v < w // d:
            coef = 1.0 / (d * d)
            terms = tuple(
                (coef, in_vars[((u * d + du) * w + (v * d + dv)) * c + ch])
                for du in range(d) for dv in range(d))
            return LinearExpr(terms)
        return LinearExpr(constant=0.0)

    return _disjunctive_family(model, spec, source, shape, out_bounds, prefix, "C6")


def encode_zoom(model: MilpModel, spec: Zoom,
                in_vars: tuple[VarId, ...], shape: tuple[int, int, int],
                out_bounds: Bounds, prefix: str) -> tuple:
    """C1 + C3 + C4 + C7: pixel replication, selected one-hot."""
    h, w, c = shape

    def source(values, flat):
        d = int(values[0])
        ch = flat % c
        u, v = divmod(flat // c, w)
        return LinearExpr.of(in_vars[((u // d) * w + (v // d)) * c + ch])

    return _disjunctive_family(model, spec, source, shape, out_bounds, prefix, "C7")


def encode_perturbation(model: MilpModel, rho: float,
                        in_vars: tuple[VarId, ...], out_bounds: Bounds,
                        prefix: str) -> tuple[VarId, ...]:
    """C8 + C9: a band of width rho around each incoming pixel."""
    lo = out_bounds[0].reshape(-1)
    hi = out_bounds[1].reshape(-1)
    outs = []
    for i, in_var in enumerate(in_vars):
        out = model.add_continuous(f"{prefix}_{i}", lo[i], hi[i])
        model.add_constraint(LinearExpr(((1.0, out), (-1.0, in_var))), LE, rho, "C8")
        model.add_constraint(LinearExpr(((1.0, out), (-1.0, in_var))), GE, -rho, "C9")
        outs.append(out)
    return tuple(outs)


def encode_relu(model: MilpModel, ws_vars: tuple[VarId, ...],
                ws_bounds: Bounds, prefix: str
                ) -> tuple[tuple[VarId, ...], dict[int, VarId]]:
    """C11-C14 per node; provably stable nodes skip the binary.

    Unstable nodes get y >= 0, y >= ws, y <= ws + M*delta and
    y <= M*(1-delta) with M = max(|lb|, |ub|).
    """
    lo = ws_bounds[0].reshape(-1)
    hi = ws_bounds[1].reshape(-1)
    ys = []
    binaries: dict[int, VarId] = {}
    for j, ws in enumerate(ws_vars):
        y = model.add_continuous(f"{prefix}_{j}", max(0.0, lo[j]), max(0.0, hi[j]))
        ys.append(y)
        if hi[j] <= 0.0:
            model.add_constraint(LinearExpr.of(y), EQ, 0.0, "C14")
        elif lo[j] >= 0.0:
            model.add_constraint(LinearExpr(((1.0, y), (-1.0, ws))), EQ, 0.0, "C12")
        else:
            big_m = max(abs(lo[j]), abs(hi[j]))
            delta = model.add_binary(f"{prefix}b_{j}")
            binaries[j] = delta
            model.add_constraint(LinearExpr.of(y), GE, 0.0, "C11")
            model.add_constraint(LinearExpr(((1.0, y), (-1.0, ws))), GE, 0.0, "C12")
            model.add_constraint(
                LinearExpr(((1.0, y), (-1.0, ws), (-big_m, delta))), LE, 0.0, "C13")
            model.add_constraint(
                LinearExpr(((1.0, y), (big_m, delta))), LE, big_m, "C14")
    return tuple(ys), binaries


def _bit_pattern(code: int, bits: int) -> tuple[int, ...]:
    return tuple((code >> k) & 1 for k in range(bits))


def encode_maxpool(model: MilpModel, in_vars: tuple[VarId, ...],
                   in_bounds: Bounds, shape: tuple[int, int, int],
                   ph: int, pw: int, out_bounds: Bounds, prefix: str
                   ) -> tuple[tuple[VarId, ...], tuple[tuple[VarId, ...], ...]]:
    """C16-C18: y is the window max, the binary code points at a maximizer.

    Window positions are numbered z = (u'-1)q' + v' - 1 row-major; codes
    use ceil(log2(p'q')) bits, least significant first, and impossible
    codes are excluded.
    """
    h, w, c = shape
    oh, ow = h // ph, w // pw
    window = ph * pw
    bits = max(0, math.ceil(math.log2(window))) if window > 1 else 0
    in_lo = in_bounds[0].reshape(-1)
    in_hi = in_bounds[1].reshape(-1)
    out_lo = out_bounds[0].reshape(-1)
    out_hi = out_bounds[1].reshape(-1)
    outs = []
    all_codes = []
    for flat in range(oh * ow * c):
        ch = flat % c
        u, v = divmod(flat // c, ow)
        members = [((u * ph + du) * w + (v * pw + dv)) * c + ch
                   for du in range(ph) for dv in range(pw)]
        y = model.add_continuous(f"{prefix}_{flat}", out_lo[flat], out_hi[flat])
        outs.append(y)
        # a member whose floor beats every other ceiling is the max
        # outright; pin y to it and skip the code binaries
        dominant = next(
            (z for z, m in enumerate(members)
             if all(in_lo[m] >= in_hi[o] for o in members if o != m)), None)
        if dominant is not None and window > 1:
            model.add_constraint(
                LinearExpr(((1.0, y), (-1.0, in_vars[members[dominant]]))),
                EQ, 0.0, "C16")
            all_codes.append(())
            continue
        codes = tuple(model.add_binary(f"{prefix}c_{flat}_{k}") for k in range(bits))
        all_codes.append(codes)
        big_m = float(out_hi[flat] - min(in_lo[m] for m in members))
        for z, member in enumerate(members):
            model.add_constraint(
                LinearExpr(((1.0, y), (-1.0, in_vars[member]))), GE, 0.0, "C16")
            pattern = _bit_pattern(z, bits)
            terms = ((1.0, y), (-1.0, in_vars[member])) + tuple(
                (-big_m * (1 - 2 * pattern[k]), codes[k]) for k in range(bits))
            model.add_constraint(LinearExpr(terms), LE, big_m * sum(pattern), "C17")
        for z in range(window, 1 << bits):
            pattern = _bit_pattern(z, bits)
            terms = tuple((float(1 - 2 * pattern[k]), codes[k]) for k in range(bits))
            model.add_constraint(LinearExpr(terms), GE, 1.0 - sum(pattern), "C18")
    return tuple(outs), tuple(all_codes)


def encode_fc_linear(model: MilpModel, layer: FullyConnectedLayer,
                     in_vars: tuple[VarId, ...], ws_bounds: Bounds,
                     prefix: str) -> tuple[VarId, ...]:
    """C10: one weighted-sum equality per node."""
    lo = ws_bounds[0].reshape(-1)
    hi = ws_bounds[1].reshape(-1)
    outs = []
    for j in range(layer.out_size):
        ws = model.add_continuous(f"{prefix}_{j}", lo[j], hi[j])
        terms = ((1.0, ws),) + tuple(
            (-float(layer.weights[j, i]), in_vars[i])
            for i in range(layer.in_size) if layer.weights[j, i] != 0.0)
        model.add_constraint(LinearExpr(terms), EQ, float(layer.bias[j]), "C10")
        outs.append(ws)
    return tuple(outs)


def encode_conv_linear(model: MilpModel, layer: ConvolutionalLayer,
                       in_vars: tuple[VarId, ...], in_shape: tuple[int, int, int],
                       ws_bounds: Bounds, prefix: str) -> tuple[VarId, ...]:
    """C15: one window inner-product equality per convolution output."""
    h, w, c = in_shape
    oh, ow, k = layer.conv_output_shape(in_shape)
    lo = ws_bounds[0].reshape(-1)
    hi = ws_bounds[1].reshape(-1)
    outs = []
    for flat in range(oh * ow * k):
        j = flat % k
        u, v = divmod(flat // k, ow)
        ws = model.add_continuous(f"{prefix}_{flat}", lo[flat], hi[flat])
        terms = [(1.0, ws)]
        for du in range(layer.kernel_height):
            for dv in range(layer.kernel_width):
                for r in range(c):
                    coef = float(layer.kernels[j, du, dv, r])
                    if coef != 0.0:
                        terms.append((-coef, in_vars[((u + du) * w + (v + dv)) * c + r]))
        model.add_constraint(LinearExpr(tuple(terms)), EQ, float(layer.biases[j]), "C15")
        outs.append(ws)
    return tuple(outs)


def encode_robustness(model: MilpModel, label: int, class_count: int,
                      ws_vars: tuple[VarId, ...], ws_bounds: Bounds,
                      prefix: str = "oc") -> tuple[VarId, ...]:
    """C19 + C20: some other class matches or beats the label's logit.

    Code j (0-based) addresses class j + 1; the label's own code and
    codes past the class count are excluded.  Ties are violations.
    """
    if class_count < 2:
        raise DomainError("robustness needs at least two classes")
    bits = math.ceil(math.log2(class_count))
    codes = tuple(model.add_binary(f"{prefix}_{k}") for k in range(bits))
    lo = ws_bounds[0].reshape(-1)
    hi = ws_bounds[1].reshape(-1)
    ws_label = ws_vars[label - 1]
    for j in range(class_count):
        if j == label - 1:
            continue
        pattern = _bit_pattern(j, bits)
        big_m = max(0.0, float(hi[label - 1] - lo[j]))
        terms = ((1.0, ws_label), (-1.0, ws_vars[j])) + tuple(
            (-big_m * (1 - 2 * pattern[k]), codes[k]) for k in range(bits))
        model.add_constraint(LinearExpr(terms), LE, big_m * sum(pattern), "C19")
    excluded = [label - 1] + list(range(class_count, 1 << bits))
    for j in excluded:
        pattern = _bit_pattern(j, bits)
        terms = tuple((float(1 - 2 * pattern[k]), codes[k]) for k in range(bits))
        model.add_constraint(LinearExpr(terms), GE, 1.0 - sum(pattern), "C20")
    return codes


def encode_query(query: VerificationQuery, *, anchor_to_image: bool = True
                 ) -> tuple[MilpModel, VariableMap, NodeBounds]:
    """Compile the whole query; feasibility means the label can flip."""
    validate_query(query)
    bounds = propagate_bounds(query, anchor_to_image=anchor_to_image)
    model = MilpModel()
    im = query.image
    shape = im.shape

    pixels = im.pixels().reshape(-1)
    in_lo = bounds.input[0].reshape(-1)
    in_hi = bounds.input[1].reshape(-1)
    input_vars = []
    for i, value in enumerate(pixels):
        v = model.add_continuous(f"in_{i}", in_lo[i], in_hi[i])
        model.add_constraint(LinearExpr.of(v), EQ, float(value), "C_im")
        input_vars.append(v)
    input_vars = tuple(input_vars)

    current_vars: tuple[VarId, ...] = input_vars
    transforms: list[TransformVars] = []
    for k, spec in enumerate(query.transformations):
        out_bounds = bounds.transforms[k]
        prefix = f"t{k}"
        if isinstance(spec, Photometric):
            outs, lambdas = encode_photometric(model, spec, im, out_bounds, prefix)
            transforms.append(TransformVars(spec, lambdas, (), (), outs))
        elif isinstance(spec, Perturbation):
            outs = encode_perturbation(model, spec.radius, current_vars,
                                       out_bounds, f"{prefix}px")
            transforms.append(TransformVars(spec, (), (), (), outs))
        else:
            if isinstance(spec, Translation):
                block = encode_translation
            elif isinstance(spec, Subsample):
                block = encode_subsample
            else:
                block = encode_zoom
            outs, lambdas, deltas, insts = block(model, spec, current_vars,
                                                 shape, out_bounds, prefix)
            transforms.append(TransformVars(spec, lambdas, deltas, insts, outs))
        current_vars = outs

    pert_vars = encode_perturbation(model, query.perturbation_radius,
                                    current_vars, bounds.perturbation, "pert")
    current_vars = pert_vars
    current_shape: tuple[int, int, int] | int = shape

    layers: list[LayerVars] = []
    for li, layer in enumerate(query.network.layers):
        if isinstance(layer, ConvolutionalLayer):
            assert isinstance(current_shape, tuple)
            ws = encode_conv_linear(model, layer, current_vars, current_shape,
                                    bounds.linear[li], f"ws{li}")
            ys, rbs = encode_relu(model, ws, bounds.linear[li], f"y{li}")
            conv_shape = layer.conv_output_shape(current_shape)
            pooled, codes = encode_maxpool(model, ys, bounds.activated[li],
                                           conv_shape, layer.pool_height,
                                           layer.pool_width, bounds.pooled[li],
                                           f"pool{li}")
            layers.append(LayerVars(ws, ys, pooled, rbs, codes))
            current_vars = pooled
            current_shape = layer.output_shape(current_shape)
        else:
            ws = encode_fc_linear(model, layer, current_vars,
                                  bounds.linear[li], f"ws{li}")
            if layer.activation == ARGMAX:
                layers.append(LayerVars(ws, None, None, {}, None))
                current_vars = ws
            else:
                ys, rbs = encode_relu(model, ws, bounds.linear[li], f"y{li}")
                layers.append(LayerVars(ws, ys, None, rbs, None))
                current_vars = ys
            current_shape = layer.out_size

    final = layers[-1]
    output_codes = encode_robustness(model, query.label,
                                     query.network.class_count,
                                     final.linear, bounds.linear[-1])

    varmap = VariableMap(
        input_pixels=input_vars,
        transforms=tuple(transforms),
        perturbation_outputs=pert_vars,
        layers=tuple(layers),
        output_codes=output_codes,
        claimed_tags=frozenset(model.tags()),
    )
    return model, varmap, bounds
