"""Single-channel facade sketch rasters and the pixel ops built on them.

Sketches are 8-bit grayscale: 0 = black stroke, 255 = white background.
Color only appears at the final rendered-image stage. All pixel-level work
dispatches to facade_pipeline.kernels so the compiled and numpy lanes stay
interchangeable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .geometry import BBox, dilate

DEFAULT_EDGE_THRESHOLD = 128
MIN_FACADE_SIDE = 64

ROOF_TYPES = ("pitched", "flat")


class DimensionMismatchError(ValueError):
    """Two rasters (or a raster and a mask) disagree in shape."""


@dataclass(frozen=True)
class SketchMeta:
    """Building-scale attributes carried alongside a sketch."""

    source_id: str = ""
    width_m: float | None = None
    height_m: float | None = None
    roof_type: str | None = None

    def __post_init__(self) -> None:
        if self.width_m is not None and not self.width_m > 0:
            raise ValueError(f"width_m must be positive, got {self.width_m}")
        if self.height_m is not None and not self.height_m > 0:
            raise ValueError(f"height_m must be positive, got {self.height_m}")
        if self.roof_type is not None and self.roof_type not in ROOF_TYPES:
            raise ValueError(f"roof_type must be one of {ROOF_TYPES}")

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "width_m": self.width_m,
            "height_m": self.height_m,
            "roof_type": self.roof_type,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SketchMeta":
        return cls(
            source_id=obj.get("source_id", ""),
            width_m=obj.get("width_m"),
            height_m=obj.get("height_m"),
            roof_type=obj.get("roof_type"),
        )


class SketchImage:
    """Immutable grayscale raster. pixels[row, col], shape (height, width)."""

    __slots__ = ("_pixels", "meta")

    def __init__(self, pixels: np.ndarray, meta: SketchMeta | None = None):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValueError(f"sketch must be a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"sketch must be non-empty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = arr.copy()
        arr.flags.writeable = False
        self._pixels = arr
        self.meta = meta if meta is not None else SketchMeta()

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SketchImage):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels)
        )

    def __repr__(self) -> str:
        return f"SketchImage({self.width}x{self.height})"

    @classmethod
    def blank(cls, width: int, height: int, value: int = 255,
              meta: SketchMeta | None = None) -> "SketchImage":
        return cls(np.full((height, width), value, dtype=np.uint8), meta)

    def with_meta(self, meta: SketchMeta) -> "SketchImage":
        return SketchImage(self._pixels, meta)

    def validate_facade(self) -> list[str]:
        """Checks a raster is facade-grade: large enough, dark strokes on white.

        Component patches and test rasters are legitimately smaller, so this
        is a boundary check rather than a constructor invariant.
        """
        problems = []
        if self.width < MIN_FACADE_SIDE or self.height < MIN_FACADE_SIDE:
            problems.append(
                f"facade sketch must be at least {MIN_FACADE_SIDE}px per side, "
                f"got {self.width}x{self.height}"
            )
        values, counts = np.unique(self._pixels, return_counts=True)
        mode = int(values[np.argmax(counts)])
        if mode != 255:
            problems.append(f"background mode must be 255 (white), got {mode}")
        return problems

    def to_png_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        Image.fromarray(self._pixels, mode="L").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())

    @classmethod
    def from_png_bytes(cls, data: bytes, meta: SketchMeta | None = None) -> "SketchImage":
        import io

        img = Image.open(io.BytesIO(data)).convert("L")
        return cls(np.asarray(img, dtype=np.uint8), meta)

    @classmethod
    def load_png(cls, path: str | Path, meta: SketchMeta | None = None) -> "SketchImage":
        return cls.from_png_bytes(Path(path).read_bytes(), meta)


@dataclass(frozen=True)
class RegionMask:
    """Boolean per-pixel mask bound to a raster's dimensions."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.dtype != np.bool_:
            raise ValueError("mask must be a 2-D boolean array")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def count(self) -> int:
        return int(np.count_nonzero(self.pixels))

    def union(self, other: "RegionMask") -> "RegionMask":
        _check_same_shape(self.pixels, other.pixels)
        return RegionMask(self.pixels | other.pixels)

    def covers(self, other: "RegionMask") -> bool:
        _check_same_shape(self.pixels, other.pixels)
        return bool(np.all(self.pixels | ~other.pixels))


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape {a.shape} != shape {b.shape}")


def pixel_span(lo: float, hi: float, n: int) -> tuple[int, int]:
    """Half-open pixel index range whose centers fall in [lo, hi).

    Shares the predicate used by mask rasterization so box pixel extents and
    masks can never disagree.
    """
    centers = (np.arange(n, dtype=np.float64) + 0.5) / n
    hit = np.nonzero((centers >= lo) & (centers < hi))[0]
    if hit.size == 0:
        return (0, 0)
    return (int(hit[0]), int(hit[-1]) + 1)


def box_pixel_extent(box: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    """(left, top, pixel_width, pixel_height) of a normalized box on a canvas."""
    x_start, x_stop = pixel_span(box.x0, box.x1, width)
    y_start, y_stop = pixel_span(box.y0, box.y1, height)
    return (x_start, y_start, x_stop - x_start, y_stop - y_start)


def rasterize_mask(size: tuple[int, int], boxes: list[BBox], margin: float = 0.0) -> RegionMask:
    """Mask of pixels whose centers lie inside the union of dilated boxes."""
    width, height = size
    if not boxes:
        return RegionMask(np.zeros((height, width), dtype=bool))
    dilated = np.array(
        [[d.x0, d.y0, d.x1, d.y1] for d in (dilate(b, margin) for b in boxes)],
        dtype=np.float64,
    )
    return RegionMask(kernels.box_mask(height, width, dilated))


def edge_map(s: SketchImage, threshold: int = DEFAULT_EDGE_THRESHOLD) -> RegionMask:
    """4-neighbor max-difference edge detector; exact integer rule."""
    if not (1 <= threshold <= 255):
        raise ValueError(f"threshold must be in [1, 255], got {threshold}")
    return RegionMask(kernels.edge_map(s.pixels, threshold))


def pixels_equal_outside(a: SketchImage, b: SketchImage, mask: RegionMask) -> bool:
    """True iff a and b are bit-identical wherever the mask is False."""
    _check_same_shape(a.pixels, b.pixels)
    _check_same_shape(a.pixels, mask.pixels)
    return kernels.equal_outside(a.pixels, b.pixels, mask.pixels)
