"""Vectorized numpy implementations of the pixel kernels.

This is the fallback lane used when the compiled extension is unavailable
(or when FACADE_KERNELS=python). Both lanes must produce bit-identical
outputs; tests/test_kernels.py enforces the equivalence.
"""

from __future__ import annotations

import numpy as np


def edge_map(img: np.ndarray, threshold: int) -> np.ndarray:
    """Boolean map: pixel is an edge iff any 4-neighbor differs by >= threshold.

    Border pixels only consider neighbors that exist. Pure integer
    arithmetic, so the result is exact.
    """
    im = img.astype(np.int16)
    out = np.zeros(img.shape, dtype=bool)
    d = np.abs(im[:, 1:] - im[:, :-1]) >= threshold
    out[:, 1:] |= d
    out[:, :-1] |= d
    d = np.abs(im[1:, :] - im[:-1, :]) >= threshold
    out[1:, :] |= d
    out[:-1, :] |= d
    return out


def box_mask(height: int, width: int, boxes: np.ndarray) -> np.ndarray:
    """Rasterize normalized (x0, y0, x1, y1) boxes by the pixel-center rule.

    A pixel (px, py) is covered iff its center ((px+0.5)/width, (py+0.5)/height)
    lies in the half-open region [x0, x1) x [y0, y1) of any box.
    """
    mask = np.zeros((height, width), dtype=bool)
    if len(boxes) == 0:
        return mask
    cx = (np.arange(width, dtype=np.float64) + 0.5) / width
    cy = (np.arange(height, dtype=np.float64) + 0.5) / height
    for x0, y0, x1, y1 in boxes:
        xs = (cx >= x0) & (cx < x1)
        ys = (cy >= y0) & (cy < y1)
        mask |= ys[:, None] & xs[None, :]
    return mask


def equal_outside(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> bool:
    """True iff a == b at every pixel where mask is False."""
    return bool(np.all(mask | (a == b)))


def blend_min(dst: np.ndarray, patch: np.ndarray, top: int, left: int) -> None:
    """In-place darker-wins blend of patch into dst at (top, left)."""
    ph, pw = patch.shape
    region = dst[top : top + ph, left : left + pw]
    np.minimum(region, patch, out=region)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Round-half-up luminance of an (h, w, 3) uint8 raster."""
    r = rgb[:, :, 0].astype(np.float64)
    g = rgb[:, :, 1].astype(np.float64)
    b = rgb[:, :, 2].astype(np.float64)
    return np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5).astype(np.uint8)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two boolean masks; 1.0 when both are empty."""
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return inter / union
