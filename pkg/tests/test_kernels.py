"""Lane-equivalence tests: the compiled kernels must match the numpy
fallback bit for bit on every operation."""

import numpy as np
import pytest

from facade_pipeline import kernels
from facade_pipeline.kernels import _numpy as fallback

try:
    from facade_pipeline.kernels import _native as native
except ImportError:
    native = None

needs_native = pytest.mark.skipif(native is None, reason="native lane not built")


def test_backend_reported():
    assert kernels.BACKEND in ("native", "python")


def _random_boxes(rng, n):
    lo = rng.random((n, 2)) * 0.8
    size = rng.random((n, 2)) * 0.2 + 0.01
    return np.ascontiguousarray(np.concatenate([lo, np.minimum(lo + size, 1.0)], axis=1))


@needs_native
@pytest.mark.parametrize("seed", range(5))
def test_edge_map_equivalence(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (int(rng.integers(1, 90)), int(rng.integers(1, 90))),
                       dtype=np.uint8)
    for threshold in (1, 64, 128, 255):
        assert np.array_equal(native.edge_map(img, threshold),
                              fallback.edge_map(img, threshold))


@needs_native
@pytest.mark.parametrize("seed", range(5))
def test_box_mask_equivalence(seed):
    rng = np.random.default_rng(100 + seed)
    h, w = int(rng.integers(1, 120)), int(rng.integers(1, 120))
    boxes = _random_boxes(rng, int(rng.integers(0, 6)))
    assert np.array_equal(native.box_mask(h, w, boxes), fallback.box_mask(h, w, boxes))


@needs_native
def test_equal_outside_equivalence():
    rng = np.random.default_rng(7)
    a = rng.integers(0, 256, (50, 60), dtype=np.uint8)
    mask = rng.random((50, 60)) < 0.2
    b = a.copy()
    assert native.equal_outside(a, b, mask) == fallback.equal_outside(a, b, mask) == True
    inside = np.argwhere(mask)[0]
    b2 = a.copy()
    b2[inside[0], inside[1]] ^= 0xFF
    assert native.equal_outside(a, b2, mask) == fallback.equal_outside(a, b2, mask) == True
    outside = np.argwhere(~mask)[0]
    b3 = a.copy()
    b3[outside[0], outside[1]] ^= 0xFF
    assert native.equal_outside(a, b3, mask) == fallback.equal_outside(a, b3, mask) == False


@needs_native
def test_blend_min_equivalence():
    rng = np.random.default_rng(9)
    base = rng.integers(0, 256, (40, 50), dtype=np.uint8)
    patch = rng.integers(0, 256, (10, 12), dtype=np.uint8)
    a, b = base.copy(), base.copy()
    native.blend_min(a, patch, 5, 7)
    fallback.blend_min(b, patch, 5, 7)
    assert np.array_equal(a, b)
    assert np.array_equal(a[5:15, 7:19], np.minimum(base[5:15, 7:19], patch))
    assert np.array_equal(a[:5], base[:5])


@needs_native
@pytest.mark.parametrize("seed", range(3))
def test_luminance_equivalence(seed):
    rng = np.random.default_rng(200 + seed)
    rgb = rng.integers(0, 256, (33, 44, 3), dtype=np.uint8)
    assert np.array_equal(native.luminance(rgb), fallback.luminance(rgb))


@needs_native
def test_luminance_extremes():
    white = np.full((4, 4, 3), 255, dtype=np.uint8)
    black = np.zeros((4, 4, 3), dtype=np.uint8)
    assert np.all(native.luminance(white) == 255)
    assert np.all(fallback.luminance(white) == 255)
    assert np.all(native.luminance(black) == 0)


@needs_native
@pytest.mark.parametrize("seed", range(3))
def test_mask_iou_equivalence(seed):
    rng = np.random.default_rng(300 + seed)
    a = rng.random((30, 40)) < 0.3
    b = rng.random((30, 40)) < 0.3
    assert native.mask_iou(a, b) == fallback.mask_iou(a, b)
    empty = np.zeros((30, 40), dtype=bool)
    assert native.mask_iou(empty, empty) == fallback.mask_iou(empty, empty) == 1.0
