"""Dense tensor and image primitives shared by every other module.

All pixel data and intermediate activations are held as 3-D arrays of
shape (height, width, channels), float64 throughout.  The single flat
index convention used everywhere (model variables, vector reshapes,
file formats) is::

    flat = (row * width + column) * channels + channel

which is exactly C-order raveling of an (h, w, c) array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Shapes or indices do not line up."""


class DomainError(ValueError):
    """A parameter lies outside its admissible domain."""


@dataclass(frozen=True)
class Tensor3:
    """Immutable dense rank-3 array (height x width x channels).

    The backing ndarray is write-locked on construction, so tensors can
    be shared freely across threads.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionError(f"expected 3-D data, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionError(f"all dimensions must be positive, got {arr.shape}")
        # copy so write-locking never reaches back into caller-owned storage
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def at(self, row: int, col: int, channel: int) -> float:
        """Value at (row, col, channel); rejects out-of-range coordinates."""
        if not (0 <= row < self.height and 0 <= col < self.width and 0 <= channel < self.channels):
            raise DimensionError(
                f"index ({row}, {col}, {channel}) out of range for shape {self.shape}"
            )
        return float(self.data[row, col, channel])

    def flat_index(self, row: int, col: int, channel: int) -> int:
        """Flat position of (row, col, channel) under the global convention."""
        if not (0 <= row < self.height and 0 <= col < self.width and 0 <= channel < self.channels):
            raise DimensionError(
                f"index ({row}, {col}, {channel}) out of range for shape {self.shape}"
            )
        return (row * self.width + col) * self.channels + channel

    @staticmethod
    def from_array(values, height: int | None = None, width: int | None = None,
                   channels: int | None = None) -> "Tensor3":
        """Build a tensor from any array-like.

        2-D input becomes a single-channel tensor.  1-D input requires
        the explicit target shape.
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            if height is None or width is None or channels is None:
                raise DimensionError("1-D input needs explicit height/width/channels")
            arr = arr.reshape(height, width, channels)
        elif arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        return Tensor3(arr)

    def allclose(self, other: "Tensor3", atol: float = 0.0) -> bool:
        return self.shape == other.shape and bool(
            np.allclose(self.data, other.data, rtol=0.0, atol=atol)
        )


def reshape_to_vector(t: Tensor3) -> np.ndarray:
    """Flatten a tensor to a vector under the global index convention.

    Round-trips with :func:`vector_to_tensor`.
    """
    return t.data.reshape(-1).copy()


def vector_to_tensor(vec, height: int, width: int, channels: int) -> Tensor3:
    """Inverse of :func:`reshape_to_vector`."""
    arr = np.asarray(vec, dtype=np.float64)
    expected = height * width * channels
    if arr.ndim != 1 or arr.size != expected:
        raise DimensionError(
            f"vector of length {arr.size} does not fill shape ({height}, {width}, {channels})"
        )
    return Tensor3(arr.reshape(height, width, channels))


@dataclass(frozen=True)
class Image:
    """A tensor of pixels together with its value scale.

    Every pixel must lie in [0, p_max].  The scale is carried per image
    because digit-recognition tooling mixes 0..255 and 0..1 conventions.
    """

    data: Tensor3
    p_max: float = 255.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.p_max) or self.p_max <= 0:
            raise DomainError(f"p_max must be positive and finite, got {self.p_max}")
        lo = float(self.data.data.min())
        hi = float(self.data.data.max())
        if lo < 0.0 or hi > self.p_max:
            raise DomainError(
                f"pixel values [{lo}, {hi}] fall outside [0, {self.p_max}]"
            )

    @property
    def height(self) -> int:
        return self.data.height

    @property
    def width(self) -> int:
        return self.data.width

    @property
    def channels(self) -> int:
        return self.data.channels

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def pixels(self) -> np.ndarray:
        """Read-only (h, w, c) view of the pixel values."""
        return self.data.data

    def with_pixels(self, values) -> "Image":
        """Same scale, new pixel values."""
        return Image(Tensor3.from_array(np.asarray(values, dtype=np.float64)
                                        .reshape(self.shape)), self.p_max)


def _values_of(x: "Tensor3 | Image") -> np.ndarray:
    return x.data.data if isinstance(x, Image) else x.data


def linf_distance(a: "Tensor3 | Image", b: "Tensor3 | Image") -> float:
    """Largest absolute entry-wise difference between two tensors or images.

    Symmetric, zero exactly on equal inputs; shapes must match.
    """
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(_values_of(a) - _values_of(b))))
