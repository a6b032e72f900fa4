"""Normalized rectangle algebra.

All boxes live in the unit square: origin top-left, x rightward, y downward.
On every wire and file surface a box is serialized as integer thousandths
(bbox_2d = [qx0, qy0, qx1, qy1] with values in 0..1000).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

QUANT_SCALE = 1000


class DegenerateBoxError(ValueError):
    """Quantization (or parsing) collapsed a box to zero width or height."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle with normalized coordinates, strictly positive area."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x0 < self.x1 <= 1.0):
            raise ValueError(f"invalid x extent: {self.x0}..{self.x1}")
        if not (0.0 <= self.y0 < self.y1 <= 1.0):
            raise ValueError(f"invalid y extent: {self.y0}..{self.y1}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class QuantBBox:
    """Integer-thousandths form of a box, the serialization used in model-facing text."""

    qx0: int
    qy0: int
    qx1: int
    qy1: int

    def __post_init__(self) -> None:
        for v in (self.qx0, self.qy0, self.qx1, self.qy1):
            if not isinstance(v, int) or not (0 <= v <= QUANT_SCALE):
                raise ValueError(f"quantized coordinate out of range: {v}")
        if not (self.qx0 < self.qx1 and self.qy0 < self.qy1):
            raise DegenerateBoxError(
                f"degenerate quantized box: ({self.qx0},{self.qy0},{self.qx1},{self.qy1})"
            )


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union. Symmetric; boxes sharing only an edge give 0."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def contains(outer: BBox, inner: BBox) -> bool:
    """True iff inner lies entirely within outer (boundary touch allowed)."""
    return (
        outer.x0 <= inner.x0
        and inner.x1 <= outer.x1
        and outer.y0 <= inner.y0
        and inner.y1 <= outer.y1
    )


def dilate(b: BBox, margin: float) -> BBox:
    """Grow a box by margin on each side, clipped to the unit square."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    return BBox(
        max(0.0, b.x0 - margin),
        max(0.0, b.y0 - margin),
        min(1.0, b.x1 + margin),
        min(1.0, b.y1 + margin),
    )


def _q(v: float) -> int:
    # round-half-up, independent of the platform rounding mode
    return int(math.floor(v * QUANT_SCALE + 0.5))


def quantize(b: BBox) -> QuantBBox:
    """Round to integer thousandths; raises DegenerateBoxError on collapse."""
    qx0, qy0, qx1, qy1 = _q(b.x0), _q(b.y0), _q(b.x1), _q(b.y1)
    if qx0 == qx1 or qy0 == qy1:
        raise DegenerateBoxError(f"box {b} collapses to ({qx0},{qy0},{qx1},{qy1})")
    return QuantBBox(qx0, qy0, qx1, qy1)


def dequantize(q: QuantBBox) -> BBox:
    """Map integer thousandths back to normalized coordinates."""
    return BBox(
        q.qx0 / QUANT_SCALE,
        q.qy0 / QUANT_SCALE,
        q.qx1 / QUANT_SCALE,
        q.qy1 / QUANT_SCALE,
    )


def bbox_to_wire(b: BBox) -> list[int]:
    """Quantized [qx0, qy0, qx1, qy1] list as used in bbox_2d fields."""
    q = quantize(b)
    return [q.qx0, q.qy0, q.qx1, q.qy1]


def bbox_from_wire(values) -> BBox:
    """Parse a bbox_2d list; raises DegenerateBoxError / ValueError on bad input."""
    if len(values) != 4:
        raise ValueError(f"bbox_2d must have 4 entries, got {len(values)}")
    ints = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"bbox_2d entries must be integers, got {v!r}")
        ints.append(min(max(v, 0), QUANT_SCALE))
    return dequantize(QuantBBox(*ints))
