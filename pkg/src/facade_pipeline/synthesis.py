"""Stage 2: synthesize a component patch per planned ADD and merge the
patches into the sketch.

The defining contract: pixels outside the dilated modification regions are
bit-identical to the input. The pipeline enforces it by construction,
clamping whatever a compositor returns back to the base outside the mask,
so even a real inpainting backend cannot leak changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import BBox, bbox_to_wire
from .guidance import (
    DEFAULT_OVERLAP_TOLERANCE,
    RenovationPlan,
    ValidationReport,
    plan_to_json,
    validate_plan,
)
from .sketch import RegionMask, SketchImage, box_pixel_extent, rasterize_mask

DEFAULT_MARGIN = 0.01
MIN_PATCH_SIDE = 8

STROKE = 2
INSET = 1
HANDLE_SIZE = 3
HANDLE_FROM_RIGHT = 0.2


class PatchTooSmallError(ValueError):
    """Requested patch dims below the 8x8 procedural minimum."""


class PatchDimMismatchError(ValueError):
    """A patch's dims disagree with its target box's pixel extent."""


class InvalidPlanError(ValueError):
    """enhance() was handed a plan that fails validation."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(f"plan fails validation: {len(report.violations)} violation(s)")


class SynthesisBackendError(RuntimeError):
    """A component or compositor backend failed; carries the mod index."""

    def __init__(self, message: str, mod_index: int | None = None):
        self.mod_index = mod_index
        where = f" (mod {mod_index})" if mod_index is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class PatchProvenance:
    backend_id: str
    seed: int


@dataclass
class ComponentPatch:
    label: str
    target: BBox
    patch: SketchImage
    provenance: PatchProvenance


# ---------------------------------------------------------------------------
# procedural component stub


def _border_ring(px: np.ndarray) -> None:
    h, w = px.shape
    lo, hi_r, hi_c = INSET, h - 1 - INSET, w - 1 - INSET
    for t in range(STROKE):
        px[lo + t, lo : hi_c + 1] = 0
        px[hi_r - t, lo : hi_c + 1] = 0
        px[lo : hi_r + 1, lo + t] = 0
        px[lo : hi_r + 1, hi_c - t] = 0


def stub_generate(label: str, width: int, height: int, seed: int = 0) -> SketchImage:
    """Procedural line drawing of a window or door.

    2px strokes on white: windows get a border rectangle inset 1px plus a
    centered mullion cross; doors get the border, a handle dot 20% in from
    the right at mid-height, and a panel line at half height. The seed is
    recorded by callers but does not influence the stub.
    """
    if width < MIN_PATCH_SIDE or height < MIN_PATCH_SIDE:
        raise PatchTooSmallError(
            f"patch must be at least {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}px, "
            f"got {width}x{height}"
        )
    px = np.full((height, width), 255, dtype=np.uint8)
    _border_ring(px)
    r_lo, r_hi = INSET + STROKE, height - 1 - INSET - STROKE
    c_lo, c_hi = INSET + STROKE, width - 1 - INSET - STROKE
    if label == "window":
        cm = width // 2 - 1
        px[r_lo : r_hi + 1, cm : cm + STROKE] = 0
        rm = height // 2 - 1
        px[rm : rm + STROKE, c_lo : c_hi + 1] = 0
    elif label == "door":
        rm = height // 2 - 1
        px[rm : rm + STROKE, c_lo : c_hi + 1] = 0
        hr = height // 2
        hc = (width - 1) - int(round(HANDLE_FROM_RIGHT * width))
        half = HANDLE_SIZE // 2
        px[max(0, hr - half) : hr + half + 1, max(0, hc - half) : hc + half + 1] = 0
    else:
        raise ValueError(f"unknown component label: {label!r}")
    return SketchImage(px)


class StubComponentBackend:
    backend_id = "stub"
    concurrent_safe = True

    def generate(self, label: str, width: int, height: int,
                 style_ref: SketchImage | None = None, seed: int = 0) -> SketchImage:
        return stub_generate(label, width, height, seed)


# ---------------------------------------------------------------------------
# compositing


def stub_merge(base: SketchImage, patches: list[ComponentPatch],
               margin: float = DEFAULT_MARGIN) -> SketchImage:
    """Darker-wins merge: inside each target box output = min(base, patch);
    everywhere else the base shows through unchanged."""
    if not patches:
        return base
    out = base.pixels.copy()
    for p in patches:
        left, top, pw, ph = box_pixel_extent(p.target, base.width, base.height)
        if (p.patch.width, p.patch.height) != (pw, ph):
            raise PatchDimMismatchError(
                f"patch {p.patch.width}x{p.patch.height} != target extent {pw}x{ph}"
            )
        kernels.blend_min(out, p.patch.pixels, top, left)
    return SketchImage(out, base.meta)


class StubCompositor:
    backend_id = "stub"

    def merge(self, base: SketchImage, patches: list[ComponentPatch],
              margin: float = DEFAULT_MARGIN) -> SketchImage:
        return stub_merge(base, patches, margin)


def clamp_outside_mask(base: SketchImage, merged: SketchImage,
                       mask: RegionMask) -> SketchImage:
    """Copy base pixels wherever the mask is False; makes the preservation
    contract hold no matter what a backend returned."""
    out = np.where(mask.pixels, merged.pixels, base.pixels)
    return SketchImage(out, base.meta)


# ---------------------------------------------------------------------------
# the enhance stage


@dataclass
class EnhancedSketch:
    sketch: SketchImage
    plan: RenovationPlan
    patches: list[ComponentPatch] = field(default_factory=list)
    margin: float = DEFAULT_MARGIN


def enhance(sketch: SketchImage, plan: RenovationPlan, component_backend,
            compositor, *, margin: float = DEFAULT_MARGIN, seed: int = 0,
            tolerance: float = DEFAULT_OVERLAP_TOLERANCE) -> EnhancedSketch:
    """Generate one patch per ADD mod (seed = run seed + mod index), merge
    them all at once, and clamp the result outside the dilated mod regions."""
    report = validate_plan(plan, tolerance)
    if not report.valid:
        raise InvalidPlanError(report)
    if not plan.mods:
        return EnhancedSketch(sketch, plan, [], margin)

    patches: list[ComponentPatch] = []
    for i, mod in enumerate(plan.mods):
        _, _, pw, ph = box_pixel_extent(mod.box, sketch.width, sketch.height)
        try:
            raster = component_backend.generate(
                mod.label, pw, ph, style_ref=sketch, seed=seed + i
            )
        except (PatchTooSmallError, ValueError) as exc:
            raise SynthesisBackendError(str(exc), mod_index=i) from exc
        patches.append(
            ComponentPatch(
                mod.label, mod.box, raster,
                PatchProvenance(component_backend.backend_id, seed + i),
            )
        )

    try:
        merged = compositor.merge(sketch, patches, margin)
    except PatchDimMismatchError:
        raise
    except Exception as exc:
        raise SynthesisBackendError(f"compositor failed: {exc}") from exc
    if merged.size != sketch.size:
        raise SynthesisBackendError(
            f"compositor changed dims: {merged.size} != {sketch.size}"
        )
    mask = rasterize_mask(sketch.size, [m.box for m in plan.mods], margin)
    clamped = clamp_outside_mask(sketch, merged, mask)
    return EnhancedSketch(clamped, plan, patches, margin)


# ---------------------------------------------------------------------------
# persistence: enhanced.png + enhanced.json


def enhanced_meta_json(enhanced: EnhancedSketch) -> dict:
    return {
        "plan": plan_to_json(enhanced.plan),
        "patches": [
            {
                "label": p.label,
                "bbox_2d": bbox_to_wire(p.target),
                "backend_id": p.provenance.backend_id,
                "seed": p.provenance.seed,
            }
            for p in enhanced.patches
        ],
        "margin": enhanced.margin,
    }


def save_enhanced(enhanced: EnhancedSketch, png_path: str | Path,
                  json_path: str | Path) -> None:
    enhanced.sketch.save_png(png_path)
    Path(json_path).write_text(
        json.dumps(enhanced_meta_json(enhanced), separators=(",", ":"))
    )
