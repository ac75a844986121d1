"""Saliency overlay rendering with a fixed four-anchor colormap.

The anchor definition is shared verbatim with the web client so both sides
blend identically: 0 -> blue, 1/3 -> cyan, 2/3 -> yellow, 1 -> red, linear
in between.
"""

from __future__ import annotations

import numpy as np

from ..domain import ImageTensor, SaliencyMap
from ..errors import DimensionMismatch, ValueOutOfRange

COLORMAP_ANCHORS = (
    (0.0, (0.0, 0.0, 1.0)),
    (1.0 / 3.0, (0.0, 1.0, 1.0)),
    (2.0 / 3.0, (1.0, 1.0, 0.0)),
    (1.0, (1.0, 0.0, 0.0)),
)

_POSITIONS = np.array([a[0] for a in COLORMAP_ANCHORS])
_COLORS = np.array([a[1] for a in COLORMAP_ANCHORS])


def colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB through the fixed anchor ramp."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    idx = np.clip(np.searchsorted(_POSITIONS, v, side="right") - 1,
                  0, len(COLORMAP_ANCHORS) - 2)
    left = _POSITIONS[idx]
    span = _POSITIONS[idx + 1] - left
    t = ((v - left) / span)[..., None]
    return _COLORS[idx] * (1.0 - t) + _COLORS[idx + 1] * t


def render_overlay(image: ImageTensor, smap: SaliencyMap,
                   alpha: float) -> ImageTensor:
    """Alpha-blend the colormapped saliency onto the image (always RGB out)."""
    if (smap.height, smap.width) != (image.height, image.width):
        raise DimensionMismatch(
            f"saliency {(smap.height, smap.width)} != "
            f"image {(image.height, image.width)}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueOutOfRange(f"alpha {alpha} outside [0, 1]")
    rgb = image.data if image.channels == 3 else \
        np.repeat(image.data, 3, axis=2)
    blended = (1.0 - alpha) * rgb + alpha * colormap(smap.values)
    blended = np.clip(blended, 0.0, 1.0)
    return ImageTensor(image.height, image.width, 3, blended)
