"""Numeric image transformations and their parameter domains.

These are the executable semantics: the brute-force falsifier and
counterexample replay both run transformations through this module, so
it must agree exactly with the constraint encoding of the same
operations.

Conventions shared with the encoder:
  - translation by (t_x, t_y) reads source pixel (u + t_x, v + t_y);
    t_x shifts rows, t_y shifts columns; missing sources read as 0,
  - subsampling averages disjoint d x d blocks and parks the shrunken
    image in the top-left corner, zero elsewhere, keeping the shape,
  - zoom replicates the top-left region, output(u, v) = input(u // d,
    v // d) in 0-based coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import DimensionError, DomainError, Image, Tensor3


@dataclass(frozen=True)
class Photometric:
    """Affine intensity change out = mu * p + nu over a box of (mu, nu)."""

    mu_lo: float
    mu_hi: float
    nu_lo: float
    nu_hi: float

    def __post_init__(self) -> None:
        for lo, hi, name in ((self.mu_lo, self.mu_hi, "mu"), (self.nu_lo, self.nu_hi, "nu")):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise DomainError(f"{name} interval must be finite")
            if lo > hi:
                raise DomainError(f"empty {name} interval [{lo}, {hi}]")


@dataclass(frozen=True)
class Translation:
    """Pixel shift over a finite set of integer (t_x, t_y) pairs."""

    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.offsets:
            raise DomainError("translation domain is empty")
        cleaned = tuple(sorted({(int(tx), int(ty)) for tx, ty in self.offsets}))
        object.__setattr__(self, "offsets", cleaned)

    @staticmethod
    def box(x_lo: int, x_hi: int, y_lo: int, y_hi: int) -> "Translation":
        """All integer shifts in [x_lo, x_hi] x [y_lo, y_hi]."""
        if x_lo > x_hi or y_lo > y_hi:
            raise DomainError("empty translation box")
        return Translation(tuple(itertools.product(range(x_lo, x_hi + 1),
                                                   range(y_lo, y_hi + 1))))


@dataclass(frozen=True)
class Subsample:
    """Block-mean downscale over a finite set of integer factors."""

    factors: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_factors(self.factors)
        object.__setattr__(self, "factors", tuple(sorted({int(d) for d in self.factors})))


@dataclass(frozen=True)
class Zoom:
    """Pixel-replication upscale over a finite set of integer factors."""

    factors: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_factors(self.factors)
        object.__setattr__(self, "factors", tuple(sorted({int(d) for d in self.factors})))


@dataclass(frozen=True)
class Perturbation:
    """Independent per-pixel offsets bounded by radius in the max norm."""

    radius: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.radius) or self.radius < 0:
            raise DomainError(f"perturbation radius must be >= 0, got {self.radius}")


TransformationSpec = Union[Photometric, Translation, Subsample, Zoom, Perturbation]


def _check_factors(factors) -> None:
    if not factors:
        raise DomainError("factor set is empty")
    for d in factors:
        if int(d) != d or d < 2:
            raise DomainError(f"scale factors must be integers >= 2, got {d}")


def check_spec_for_image(spec: TransformationSpec, height: int, width: int) -> None:
    """Reject domains that fall off the image."""
    if isinstance(spec, Translation):
        for tx, ty in spec.offsets:
            if abs(tx) >= height or abs(ty) >= width:
                raise DomainError(
                    f"shift ({tx}, {ty}) moves everything off a {height}x{width} image"
                )
    elif isinstance(spec, (Subsample, Zoom)):
        cap = min(height, width)
        for d in spec.factors:
            if d > cap:
                raise DomainError(f"factor {d} exceeds min image dimension {cap}")


def dof_count(spec: TransformationSpec) -> int:
    """Number of scalar degrees of freedom (perturbation has none)."""
    if isinstance(spec, (Photometric, Translation)):
        return 2
    if isinstance(spec, (Subsample, Zoom)):
        return 1
    return 0


@dataclass(frozen=True)
class Instantiation:
    """One concrete parameter choice for a transformation.

    values holds the per-degree-of-freedom numbers; offsets is used only
    by perturbations.  domain_covered is False when this point stands in
    for a continuum that cannot be enumerated.
    """

    values: tuple[float, ...] = ()
    offsets: Tensor3 | None = None
    domain_covered: bool = True


def apply_photometric(im: Image, mu: float, nu: float) -> Image:
    """Scale and shift every pixel, clamping back into [0, p_max]."""
    out = np.clip(mu * im.pixels() + nu, 0.0, im.p_max)
    return im.with_pixels(out)


def apply_translation(im: Image, t_x: int, t_y: int) -> Image:
    """Shift content so output(u, v) = input(u + t_x, v + t_y), 0 outside."""
    h, w = im.height, im.width
    if abs(t_x) >= h or abs(t_y) >= w:
        raise DomainError(f"shift ({t_x}, {t_y}) out of range for {h}x{w}")
    out = np.zeros_like(im.pixels())
    u_lo, u_hi = max(0, -t_x), min(h, h - t_x)
    v_lo, v_hi = max(0, -t_y), min(w, w - t_y)
    out[u_lo:u_hi, v_lo:v_hi] = im.pixels()[u_lo + t_x:u_hi + t_x, v_lo + t_y:v_hi + t_y]
    return im.with_pixels(out)


def apply_subsample(im: Image, d: int) -> Image:
    """Average disjoint d x d blocks into the top-left corner, 0 elsewhere."""
    h, w = im.height, im.width
    if d < 2 or d > min(h, w):
        raise DomainError(f"subsample factor {d} out of range for {h}x{w}")
    hb, wb = h // d, w // d
    blocks = im.pixels()[: hb * d, : wb * d].reshape(hb, d, wb, d, im.channels)
    out = np.zeros_like(im.pixels())
    out[:hb, :wb] = blocks.mean(axis=(1, 3))
    return im.with_pixels(out)


def apply_zoom(im: Image, d: int) -> Image:
    """Replicate each source pixel into a d x d block, cropped to shape."""
    if d < 2:
        raise DomainError(f"zoom factor must be >= 2, got {d}")
    px = im.pixels()
    out = np.repeat(np.repeat(px, d, axis=0), d, axis=1)[: im.height, : im.width]
    return im.with_pixels(out)


def apply_perturbation(im: Image, offsets: Tensor3, radius: float) -> Image:
    """Add bounded per-pixel offsets, clamping back into [0, p_max]."""
    if offsets.shape != im.shape:
        raise DimensionError(f"offset shape {offsets.shape} != image shape {im.shape}")
    if float(np.max(np.abs(offsets.data))) > radius:
        raise DomainError("offset magnitude exceeds the perturbation radius")
    out = np.clip(im.pixels() + offsets.data, 0.0, im.p_max)
    return im.with_pixels(out)


def _check_in_domain(spec: TransformationSpec, inst: Instantiation) -> None:
    if isinstance(spec, Photometric):
        mu, nu = inst.values
        if not (spec.mu_lo <= mu <= spec.mu_hi and spec.nu_lo <= nu <= spec.nu_hi):
            raise DomainError(f"(mu, nu) = ({mu}, {nu}) outside the photometric box")
    elif isinstance(spec, Translation):
        pair = (int(inst.values[0]), int(inst.values[1]))
        if pair != (inst.values[0], inst.values[1]) or pair not in spec.offsets:
            raise DomainError(f"shift {inst.values} not in the translation domain")
    elif isinstance(spec, (Subsample, Zoom)):
        (d,) = inst.values
        if int(d) != d or int(d) not in spec.factors:
            raise DomainError(f"factor {d} not in the scale domain")
    # perturbation: offsets None stands for the all-zero offset


def apply_one(im: Image, spec: TransformationSpec, inst: Instantiation) -> Image:
    """Apply a single transformation at a concrete parameter choice."""
    _check_in_domain(spec, inst)
    if isinstance(spec, Photometric):
        return apply_photometric(im, inst.values[0], inst.values[1])
    if isinstance(spec, Translation):
        return apply_translation(im, int(inst.values[0]), int(inst.values[1]))
    if isinstance(spec, Subsample):
        return apply_subsample(im, int(inst.values[0]))
    if isinstance(spec, Zoom):
        return apply_zoom(im, int(inst.values[0]))
    assert isinstance(spec, Perturbation)
    if inst.offsets is None:
        return im
    return apply_perturbation(im, inst.offsets, spec.radius)


def apply_sequence(im: Image, specs: list[TransformationSpec] | tuple[TransformationSpec, ...],
                   insts: list[Instantiation] | tuple[Instantiation, ...]) -> Image:
    """Left fold: the first listed transformation is applied first."""
    if len(specs) != len(insts):
        raise DimensionError(f"{len(specs)} specs but {len(insts)} instantiations")
    for spec, inst in zip(specs, insts):
        im = apply_one(im, spec, inst)
    return im


def enumerate_instantiations(spec: TransformationSpec, grid: int = 2) -> list[Instantiation]:
    """All parameter choices of a discrete domain, or a lattice sample.

    Discrete domains (translation, subsample, zoom) come back exactly
    and in sorted order.  Photometric boxes are sampled on a grid x grid
    lattice including the corners.  A perturbation yields only the zero
    offset; its instantiation is marked domain_covered=False whenever
    the radius is positive.
    """
    if isinstance(spec, Translation):
        return [Instantiation(values=(float(tx), float(ty))) for tx, ty in spec.offsets]
    if isinstance(spec, (Subsample, Zoom)):
        return [Instantiation(values=(float(d),)) for d in spec.factors]
    if isinstance(spec, Photometric):
        if grid < 2:
            raise DomainError(f"grid must be >= 2, got {grid}")
        mus = np.linspace(spec.mu_lo, spec.mu_hi, grid)
        nus = np.linspace(spec.nu_lo, spec.nu_hi, grid)
        return [Instantiation(values=(float(m), float(n)))
                for m in mus for n in nus]
    assert isinstance(spec, Perturbation)
    return [Instantiation(offsets=None, values=(), domain_covered=(spec.radius == 0.0))]
