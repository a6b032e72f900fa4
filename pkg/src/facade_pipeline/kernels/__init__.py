"""Pixel kernels with a compiled core and a numpy fallback.

The compiled lane (Cython, built at install time) is selected when present;
otherwise the numpy lane is used. Set FACADE_KERNELS=python to force the
fallback or FACADE_KERNELS=native to require the extension. Both lanes are
bit-identical; `benchmarks/bench_kernels.py` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

_forced = os.environ.get("FACADE_KERNELS", "").strip().lower()

if _forced in ("", "native"):
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _forced == "native":
            raise
        from . import _numpy as _impl

        BACKEND = "python"
elif _forced in ("python", "numpy"):
    from . import _numpy as _impl

    BACKEND = "python"
else:
    raise RuntimeError(f"FACADE_KERNELS must be 'native' or 'python', got {_forced!r}")


def _c(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr)


def edge_map(img: np.ndarray, threshold: int) -> np.ndarray:
    """Boolean map: pixel is an edge iff any 4-neighbor differs by >= threshold."""
    return _impl.edge_map(_c(img), threshold)


def box_mask(height: int, width: int, boxes: np.ndarray) -> np.ndarray:
    """Rasterize normalized half-open (x0, y0, x1, y1) boxes by pixel centers."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return _impl.box_mask(height, width, _c(boxes))


def equal_outside(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> bool:
    """True iff a == b at every pixel where mask is False."""
    return _impl.equal_outside(_c(a), _c(b), _c(mask))


def blend_min(dst: np.ndarray, patch: np.ndarray, top: int, left: int) -> None:
    """In-place darker-wins blend; dst must be a writable contiguous array."""
    _impl.blend_min(dst, _c(patch), top, left)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Round-half-up 0.299R + 0.587G + 0.114B of an (h, w, 3) uint8 raster."""
    return _impl.luminance(_c(rgb))


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two boolean masks; 1.0 when both are empty."""
    return _impl.mask_iou(_c(a), _c(b))


__all__ = [
    "BACKEND",
    "edge_map",
    "box_mask",
    "equal_outside",
    "blend_min",
    "luminance",
    "mask_iou",
]
