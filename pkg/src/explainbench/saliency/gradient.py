"""Gradient-mechanism attribution over a FeatureBundle.

Three CAM variants share the same post-processing: bilinear upsample to the
requested output size, then min-max normalization into [0, 1]. A constant
raw map normalizes to all zeros ("nothing salient"), not 0.5.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..domain import SaliencyMap, TargetSpec
from ..errors import NonFiniteInput, ShapeMismatch
from ..model_zoo import FeatureBundle


def normalize_map(raw: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min); a constant map becomes all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise NonFiniteInput("map contains non-finite values")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def upsample_map(small: np.ndarray, out: Tuple[int, int]) -> np.ndarray:
    """Bilinear upsample with pixel-center sampling (corner alignment off).

    Output values are convex combinations of input samples, so they stay
    within [min(small), max(small)].
    """
    small = np.asarray(small, dtype=np.float64)
    if small.ndim != 2:
        raise ShapeMismatch(f"expected a 2D map, got shape {small.shape}")
    h, w = small.shape
    H, W = out
    if h > H or w > W:
        raise ShapeMismatch(f"cannot downsample {small.shape} to {out}")
    if (h, w) == (H, W):
        return small.copy()

    ys = np.clip((np.arange(H) + 0.5) * (h / H) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(W) + 0.5) * (w / W) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = small[np.ix_(y0, x0)] * (1 - wx) + small[np.ix_(y0, x1)] * wx
    bot = small[np.ix_(y1, x0)] * (1 - wx) + small[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _finish(raw: np.ndarray, out_size: Tuple[int, int], method_id: str,
            target: Optional[TargetSpec]) -> SaliencyMap:
    up = upsample_map(raw, out_size)
    values = normalize_map(up)
    return SaliencyMap(height=out_size[0], width=out_size[1], values=values,
                       method_id=method_id, mechanism="gradient", target=target)


def grad_cam_raw(bundle: FeatureBundle) -> np.ndarray:
    """ReLU of the channel sum weighted by spatially-averaged gradients."""
    alphas = bundle.gradients.mean(axis=(1, 2))
    return np.maximum(np.tensordot(alphas, bundle.feature_maps, axes=1), 0.0)


def grad_cam_pp_raw(bundle: FeatureBundle) -> np.ndarray:
    """GradCAM++ closed form under the exponential/ReLU output assumption."""
    g = bundle.gradients
    a = bundle.feature_maps
    g2 = g * g
    g3 = g2 * g
    sum_a = a.sum(axis=(1, 2), keepdims=True)
    denom = 2.0 * g2 + sum_a * g3
    # zero-gradient pixels carry no attribution
    alpha = np.divide(g2, denom, out=np.zeros_like(g2), where=denom != 0)
    weights = (alpha * np.maximum(g, 0.0)).sum(axis=(1, 2))
    return np.maximum(np.tensordot(weights, a, axes=1), 0.0)


def hires_cam_raw(bundle: FeatureBundle) -> np.ndarray:
    """Elementwise gradient-activation product, no spatial averaging."""
    return np.maximum((bundle.gradients * bundle.feature_maps).sum(axis=0), 0.0)


def grad_cam(bundle: FeatureBundle, out_size: Tuple[int, int],
             target: Optional[TargetSpec] = None) -> SaliencyMap:
    return _finish(grad_cam_raw(bundle), out_size, "grad_cam", target)


def grad_cam_pp(bundle: FeatureBundle, out_size: Tuple[int, int],
                target: Optional[TargetSpec] = None) -> SaliencyMap:
    return _finish(grad_cam_pp_raw(bundle), out_size, "grad_cam_pp", target)


def hires_cam(bundle: FeatureBundle, out_size: Tuple[int, int],
              target: Optional[TargetSpec] = None) -> SaliencyMap:
    return _finish(hires_cam_raw(bundle), out_size, "hires_cam", target)
