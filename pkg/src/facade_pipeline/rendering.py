"""Stage 3: structure-conditioned rendering and the structure-fidelity score.

Fidelity is the IoU of the conditioning sketch's edge map against the edge
map of the rendered image's luminance (or R channel): a geometric check
that needs no model weights. Low-fidelity results are flagged, never
discarded; a human judges them in the UI.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .sketch import (
    DEFAULT_EDGE_THRESHOLD,
    DimensionMismatchError,
    SketchImage,
)
from .synthesis import EnhancedSketch

DEFAULT_MIN_FIDELITY = 0.5

PROMPT_PREFIX = "photorealistic industrial building facade, "
PROMPT_SUFFIX = ", detailed materials, natural lighting, architectural photography"
NEGATIVE_PROMPT = "cartoon, blurry, extra structures"

FIDELITY_CHANNELS = ("luminance", "r")


class RenderBackendError(RuntimeError):
    """A render backend call failed; carries the spec for the audit trail."""

    def __init__(self, message: str, spec: "RenderSpec | None" = None):
        self.spec = spec
        super().__init__(message)


@dataclass(frozen=True)
class RenderSpec:
    prompt: str
    negative_prompt: str
    seed: int
    conditioning_scale: float = 1.0
    steps: int = 30

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not (0.0 <= self.conditioning_scale <= 2.0):
            raise ValueError(
                f"conditioning_scale must be in [0,2], got {self.conditioning_scale}"
            )

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
            "seed": self.seed,
            "conditioning_scale": self.conditioning_scale,
            "steps": self.steps,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RenderSpec":
        return cls(
            obj["prompt"], obj["negative_prompt"], obj["seed"],
            obj.get("conditioning_scale", 1.0), obj.get("steps", 30),
        )


def build_render_spec(brief: str, seed: int, conditioning_scale: float = 1.0,
                      steps: int = 30) -> RenderSpec:
    """Assemble the audited prompt: fixed prefix + user brief + quality suffix."""
    return RenderSpec(
        prompt=PROMPT_PREFIX + brief + PROMPT_SUFFIX,
        negative_prompt=NEGATIVE_PROMPT,
        seed=seed,
        conditioning_scale=conditioning_scale,
        steps=steps,
    )


@dataclass
class RenderedResult:
    image: np.ndarray  # (h, w, 3) uint8
    spec: RenderSpec
    fidelity: float
    flagged: bool = False


class StubRenderBackend:
    """Grayscale passthrough with a deterministic warm tint.

    R = v, G = min(255, v+8), B = min(255, v+16); every sketch edge
    survives exactly in the R channel.
    """

    backend_id = "stub"

    def render(self, sketch: SketchImage, spec: RenderSpec) -> np.ndarray:
        v = sketch.pixels.astype(np.uint16)
        out = np.empty((sketch.height, sketch.width, 3), dtype=np.uint8)
        out[:, :, 0] = v
        out[:, :, 1] = np.minimum(255, v + 8)
        out[:, :, 2] = np.minimum(255, v + 16)
        return out


def make_render_backend(cfg: dict):
    kind = cfg.get("kind", "stub")
    if kind == "stub":
        return StubRenderBackend()
    raise ValueError(f"unknown render backend kind: {kind!r}")


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Round-half-up 0.299R + 0.587G + 0.114B as uint8."""
    return kernels.luminance(rgb)


def structure_fidelity(sketch: SketchImage, rendered: np.ndarray,
                       threshold: int = DEFAULT_EDGE_THRESHOLD,
                       channel: str = "luminance") -> float:
    """Edge-set IoU between sketch and rendered image; 1.0 when both empty."""
    if channel not in FIDELITY_CHANNELS:
        raise ValueError(f"channel must be one of {FIDELITY_CHANNELS}")
    rendered = np.asarray(rendered)
    if rendered.shape[:2] != (sketch.height, sketch.width):
        raise DimensionMismatchError(
            f"rendered {rendered.shape[:2]} != sketch {(sketch.height, sketch.width)}"
        )
    if channel == "r":
        gray = rendered[:, :, 0]
    else:
        gray = luminance(rendered)
    sketch_edges = kernels.edge_map(sketch.pixels, threshold)
    render_edges = kernels.edge_map(gray, threshold)
    return kernels.mask_iou(sketch_edges, render_edges)


def render_stage(enhanced: EnhancedSketch, backend, spec: RenderSpec,
                 min_fidelity: float = DEFAULT_MIN_FIDELITY) -> RenderedResult:
    """Render the enhanced sketch, score fidelity, flag (not discard) low scores."""
    sketch = enhanced.sketch
    try:
        image = backend.render(sketch, spec)
    except Exception as exc:
        raise RenderBackendError(f"render backend failed: {exc}", spec) from exc
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise RenderBackendError(
            f"render backend returned bad raster: shape={image.shape} dtype={image.dtype}",
            spec,
        )
    if image.shape[:2] != (sketch.height, sketch.width):
        raise RenderBackendError(
            f"render backend changed dims: {image.shape[:2]} != "
            f"{(sketch.height, sketch.width)}",
            spec,
        )
    fidelity = structure_fidelity(sketch, image)
    return RenderedResult(image, spec, fidelity, flagged=fidelity < min_fidelity)


# ---------------------------------------------------------------------------
# persistence: render.png + render.json


def rgb_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_rgb_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"), dtype=np.uint8)


def render_meta_json(result: RenderedResult) -> dict:
    return {
        "spec": result.spec.to_json(),
        "fidelity": result.fidelity,
        "flagged": result.flagged,
    }


def save_render(result: RenderedResult, png_path: str | Path,
                json_path: str | Path) -> None:
    Path(png_path).write_bytes(rgb_png_bytes(result.image))
    Path(json_path).write_text(json.dumps(render_meta_json(result), separators=(",", ":")))
