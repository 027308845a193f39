"""Exact robustness verification of CNN classifiers under image transformations."""

from .core import (
    DimensionError,
    DomainError,
    Image,
    Tensor3,
    linf_distance,
    reshape_to_vector,
    vector_to_tensor,
)
from .network import (
    ConvolutionalLayer,
    ForwardResult,
    FullyConnectedLayer,
    Network,
    forward,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "DomainError",
    "Image",
    "Tensor3",
    "linf_distance",
    "reshape_to_vector",
    "vector_to_tensor",
    "ConvolutionalLayer",
    "ForwardResult",
    "FullyConnectedLayer",
    "Network",
    "forward",
    "validate",
    "__version__",
]
