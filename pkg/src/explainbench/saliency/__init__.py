from .gradient import grad_cam, grad_cam_pp, hires_cam, normalize_map, upsample_map
from .perturbation import (
    MaskSet,
    d_rise,
    detection_similarity,
    enumerate_masks,
    generate_masks,
    load_maskset,
    rise,
    save_maskset,
)

__all__ = [
    "grad_cam", "grad_cam_pp", "hires_cam", "normalize_map", "upsample_map",
    "MaskSet", "generate_masks", "enumerate_masks", "rise", "d_rise",
    "detection_similarity", "save_maskset", "load_maskset",
]
