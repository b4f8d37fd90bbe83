"""Thermal-to-fused grayscale imaging toolkit.

A wavelet-structured convolutional encoder/decoder that produces a fusion
mask from a thermal image, plus the surrounding pipeline: orthonormal Haar
DWT reference transform, averaging fusion with histogram equalization,
region-of-fusion bounding boxes, objective similarity scores, and data
tooling (PGM I/O, annotations, synthetic pair generation).
"""

__version__ = "0.1.0"

from .errors import (
    FormatError,
    ShapeError,
    StateError,
    ThermofuseError,
    ValidationError,
)

__all__ = [
    "FormatError",
    "ShapeError",
    "StateError",
    "ThermofuseError",
    "ValidationError",
    "__version__",
]
