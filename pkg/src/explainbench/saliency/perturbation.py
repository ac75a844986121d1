"""Perturbation-mechanism attribution: RISE and its detection variant.

Occlusion is multiplicative toward black (image ⊙ mask, broadcast over
channels). Saliency accumulates mask-weighted scores in mask-index order,
so results are identical regardless of how the scoring itself is scheduled.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..domain import (
    Detection,
    ImageTensor,
    SaliencyMap,
    TargetSpec,
    TaskKind,
    iou,
)
from ..errors import InvalidParameter, LengthMismatch, TargetInvalid, TooLarge
from ..model_zoo import ModelRegistry
from .gradient import normalize_map, upsample_map


@dataclass(frozen=True)
class MaskSet:
    """N occlusion masks plus the parameters that reproduce them."""

    masks: np.ndarray          # N×H×W in [0, 1]
    grid: Tuple[int, int]
    keep_prob: float
    seed: int
    mode: str = "sampled"      # sampled | enumerated

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.float64)
        if masks.ndim != 3 or masks.shape[0] < 1:
            raise InvalidParameter(f"masks must be N×H×W with N >= 1, got {masks.shape}")
        if masks.min() < 0.0 or masks.max() > 1.0:
            raise InvalidParameter("mask values outside [0, 1]")
        if not 0.0 < self.keep_prob < 1.0:
            raise InvalidParameter("keep_prob must be in (0, 1)")
        masks = np.ascontiguousarray(masks)
        masks.flags.writeable = False
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "grid", tuple(self.grid))

    @property
    def count(self) -> int:
        return self.masks.shape[0]

    @property
    def out_size(self) -> Tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]


def generate_masks(n: int, grid: Tuple[int, int], keep_prob: float,
                   out: Tuple[int, int], seed: int) -> MaskSet:
    """Sample RISE masks: Bernoulli small grids, bilinear-upsampled past the
    target size, cropped at a random per-mask cell offset."""
    h, w = grid
    H, W = out
    if n < 1:
        raise InvalidParameter("mask count must be >= 1")
    if not 0.0 < keep_prob < 1.0:
        raise InvalidParameter("keep_prob must be in (0, 1)")
    if h < 1 or w < 1 or h > H or w > W:
        raise InvalidParameter(f"grid {grid} incompatible with output {out}")

    cell_h = math.ceil(H / h)
    cell_w = math.ceil(W / w)
    up = (H + cell_h, W + cell_w)

    rng = np.random.default_rng(seed)
    grids = (rng.random((n, h, w)) < keep_prob).astype(np.float64)
    offs_r = rng.integers(0, cell_h, size=n)
    offs_c = rng.integers(0, cell_w, size=n)

    masks = np.empty((n, H, W), dtype=np.float64)
    for i in range(n):
        big = upsample_map(grids[i], up)
        r, c = offs_r[i], offs_c[i]
        masks[i] = big[r:r + H, c:c + W]
    return MaskSet(masks=masks, grid=grid, keep_prob=keep_prob, seed=seed)


def enumerate_masks(grid: Tuple[int, int]) -> MaskSet:
    """All 2^(h·w) binary masks at grid resolution, for exhaustive oracles.

    Cell (r, c) of mask i is bit (r·w + c) of i, most significant first.
    """
    h, w = grid
    cells = h * w
    if cells > 16:
        raise TooLarge(f"{cells} cells would enumerate {2 ** cells} masks")
    n = 2 ** cells
    idx = np.arange(n, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(cells - 1, -1, -1)[None, :]) & 1
    masks = bits.reshape(n, h, w).astype(np.float64)
    return MaskSet(masks=masks, grid=(h, w), keep_prob=0.5, seed=0,
                   mode="enumerated")


def apply_mask(image: ImageTensor, mask: np.ndarray) -> ImageTensor:
    """Multiplicative occlusion toward black, mask broadcast over channels."""
    return ImageTensor(image.height, image.width, image.channels,
                       image.data * mask[:, :, None])


def _class_target_id(registry: ModelRegistry, model_id: str,
                     target: TargetSpec) -> int:
    if target.class_id is None:
        raise TargetInvalid("expected a class target")
    label_set = registry.descriptor(model_id).label_set
    if not 0 <= target.class_id < len(label_set):
        raise TargetInvalid(f"class_id {target.class_id} outside label set")
    return target.class_id


def _score_all(score_fn, image: ImageTensor, masks: np.ndarray,
               batch_size: int, parallelism: int) -> np.ndarray:
    """Score image ⊙ mask for every mask; accumulation order stays fixed."""
    n = masks.shape[0]
    scores = np.empty(n, dtype=np.float64)

    def score_range(lo: int, hi: int):
        for i in range(lo, hi):
            scores[i] = score_fn(apply_mask(image, masks[i]))

    bounds = [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(lambda b: score_range(*b), bounds))
    else:
        for lo, hi in bounds:
            score_range(lo, hi)
    return scores


def _accumulate(scores: np.ndarray, masks: np.ndarray) -> np.ndarray:
    return np.tensordot(scores, masks, axes=1)


def rise(registry: ModelRegistry, model_id: str, image: ImageTensor,
         target: TargetSpec, masks: MaskSet, batch_size: int = 32,
         parallelism: int = 1) -> SaliencyMap:
    """Mask-weighted score accumulation for classification or segmentation.

    The segmentation score is the mean target-class probability over the
    pixels the unmasked prediction assigns to that class.
    """
    descriptor = registry.descriptor(model_id)
    if masks.out_size != (image.height, image.width):
        raise InvalidParameter(
            f"mask size {masks.out_size} != image {(image.height, image.width)}"
        )
    cid = _class_target_id(registry, model_id, target)

    if descriptor.task == TaskKind.CLASSIFICATION:
        def score_fn(img):
            return float(registry.predict(model_id, img).class_probs[cid])
    elif descriptor.task == TaskKind.SEGMENTATION:
        region = registry.predict(model_id, image).label_map == cid
        if not region.any():
            raise TargetInvalid(f"no pixels assigned to class {cid}")

        def score_fn(img):
            probs = registry.class_prob_map(model_id, img)
            return float(probs[..., cid][region].mean())
    else:
        raise TargetInvalid("rise handles classification and segmentation; "
                            "use d_rise for detection")

    scores = _score_all(score_fn, image, masks.masks, batch_size, parallelism)
    raw = _accumulate(scores, masks.masks) / (masks.count * masks.keep_prob)
    return SaliencyMap(height=image.height, width=image.width,
                       values=normalize_map(raw), method_id="rise",
                       mechanism="perturbation", target=target)


def detection_similarity(target: Detection, proposal: Detection) -> float:
    """Box IoU × class-probability cosine × proposal objectness."""
    if target.class_probs.shape != proposal.class_probs.shape:
        raise LengthMismatch(
            f"{target.class_probs.shape} vs {proposal.class_probs.shape}"
        )
    overlap = iou(target.box, proposal.box)
    if overlap == 0.0:
        return 0.0
    na = float(np.linalg.norm(target.class_probs))
    nb = float(np.linalg.norm(proposal.class_probs))
    if na == 0.0 or nb == 0.0:
        cos = 0.0
    else:
        cos = float(np.dot(target.class_probs, proposal.class_probs) / (na * nb))
    return overlap * cos * proposal.objectness


def d_rise(registry: ModelRegistry, model_id: str, image: ImageTensor,
           target: TargetSpec, masks: MaskSet, batch_size: int = 32,
           parallelism: int = 1) -> SaliencyMap:
    """Detection saliency: each mask weighted by the best pairing score
    between the target detection and the masked image's proposals."""
    descriptor = registry.descriptor(model_id)
    if descriptor.task != TaskKind.DETECTION:
        raise TargetInvalid(f"{model_id} is not a detection model")
    if not target.is_detection:
        raise TargetInvalid("d_rise requires a detection target snapshot")
    if masks.out_size != (image.height, image.width):
        raise InvalidParameter(
            f"mask size {masks.out_size} != image {(image.height, image.width)}"
        )
    wanted = target.detection

    def score_fn(img):
        detections = registry.predict(model_id, img).detections or ()
        if not detections:
            return 0.0
        return max(detection_similarity(wanted, d) for d in detections)

    weights = _score_all(score_fn, image, masks.masks, batch_size, parallelism)
    raw = _accumulate(weights, masks.masks)
    return SaliencyMap(height=image.height, width=image.width,
                       values=normalize_map(raw), method_id="d_rise",
                       mechanism="perturbation", target=target)


# persistence ------------------------------------------------------------

def _maskset_paths(path) -> Tuple[Path, Path]:
    base = str(path)
    if base.endswith(".npz"):
        base = base[:-4]
    return Path(base + ".npz"), Path(base + ".json")


def save_maskset(ms: MaskSet, path) -> None:
    """Compressed array file plus a JSON parameter sidecar."""
    arrays, sidecar = _maskset_paths(path)
    np.savez_compressed(arrays, masks=ms.masks)
    sidecar.write_text(json.dumps({
        "grid": list(ms.grid), "keep_prob": ms.keep_prob,
        "seed": ms.seed, "mode": ms.mode, "count": ms.count,
        "out_size": list(ms.out_size),
    }, indent=2))


def load_maskset(path) -> MaskSet:
    arrays, sidecar = _maskset_paths(path)
    params = json.loads(sidecar.read_text())
    with np.load(arrays) as data:
        masks = data["masks"]
    return MaskSet(masks=masks, grid=tuple(params["grid"]),
                   keep_prob=params["keep_prob"], seed=params["seed"],
                   mode=params["mode"])
