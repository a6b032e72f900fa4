"""Stage 1: detect existing components and propose a renovation plan.

A guidance backend is a two-call, text-in/text-out contract mirroring the
two conversation turns (detect, then propose). The deterministic stub
implements both rules; the strict parser turns raw model text back into
typed boxes. Model-facing instruction strings are fixed constants so
exported training data and inference prompts cannot drift.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox, bbox_from_wire, bbox_to_wire, iou
from .sketch import SketchImage

DETECT_INSTRUCTION = "Detect all windows and doors in the image"
UPDATE_INSTRUCTION = "Update the layout based on the detected boxes"

LABELS = ("window", "door")
ACTIONS = ("ADD",)

DEFAULT_OVERLAP_TOLERANCE = 0.05

# stub_detect rule constants
DARK_THRESHOLD = 128
RECT_INTERIOR_BACKGROUND_MIN = 0.95
DOOR_BOTTOM_SLACK = 0.02
DOOR_MIN_ASPECT = 1.5

# stub_propose rule constants
BAND_TOP = 0.35
BAND_BOTTOM = 0.75
WINDOW_WIDTH = 0.12
WINDOW_ASPECT_W_TO_H = 2 / 3
DOOR_WIDTH = 0.10
DOOR_HEIGHT = 0.25


class ParseFailureError(ValueError):
    """No well-formed grounding array could be found in the raw text."""


class GuidanceBackendError(RuntimeError):
    """A guidance backend call failed (network, protocol, bad response)."""


@dataclass(frozen=True)
class Detection:
    label: str
    box: BBox
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass
class DetectionSet:
    sketch_id: str
    items: list[Detection] = field(default_factory=list)

    def has_label(self, label: str) -> bool:
        return any(d.label == label for d in self.items)


@dataclass(frozen=True)
class Modification:
    action: str
    label: str
    box: BBox
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got {self.action!r}")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class RenovationPlan:
    sketch_id: str
    basis: DetectionSet
    mods: list[Modification]
    brief: str = ""


# ---------------------------------------------------------------------------
# wire forms


def serialize_boxes(entries, include_rationale: bool = False) -> str:
    """Compact JSON array of {"label", "bbox_2d"} objects.

    Accepts Detections or Modifications. Rationale only appears when asked
    for; training-data responses stay boxes-only.
    """
    out = []
    for e in entries:
        obj = {"label": e.label, "bbox_2d": bbox_to_wire(e.box)}
        if include_rationale and getattr(e, "rationale", ""):
            obj["rationale"] = e.rationale
        out.append(obj)
    return json.dumps(out, separators=(",", ":"))


def detections_to_json(ds: DetectionSet) -> dict:
    return {
        "sketch_id": ds.sketch_id,
        "detections": [
            {"label": d.label, "bbox_2d": bbox_to_wire(d.box)} for d in ds.items
        ],
    }


def detections_from_json(obj: dict) -> DetectionSet:
    items = [
        Detection(e["label"], bbox_from_wire(e["bbox_2d"]))
        for e in obj.get("detections", [])
    ]
    return DetectionSet(obj.get("sketch_id", ""), items)


def plan_to_json(plan: RenovationPlan) -> dict:
    return {
        "sketch_id": plan.sketch_id,
        "basis": [
            {"label": d.label, "bbox_2d": bbox_to_wire(d.box)} for d in plan.basis.items
        ],
        "mods": [
            {
                "action": m.action,
                "label": m.label,
                "bbox_2d": bbox_to_wire(m.box),
                "rationale": m.rationale,
            }
            for m in plan.mods
        ],
        "brief": plan.brief,
    }


def plan_from_json(obj: dict) -> RenovationPlan:
    basis = DetectionSet(
        obj.get("sketch_id", ""),
        [Detection(e["label"], bbox_from_wire(e["bbox_2d"])) for e in obj.get("basis", [])],
    )
    mods = [
        Modification(
            e.get("action", "ADD"),
            e["label"],
            bbox_from_wire(e["bbox_2d"]),
            e.get("rationale", ""),
        )
        for e in obj.get("mods", [])
    ]
    return RenovationPlan(obj.get("sketch_id", ""), basis, mods, obj.get("brief", ""))


# ---------------------------------------------------------------------------
# parsing model output


@dataclass(frozen=True)
class ParsedBox:
    label: str
    box: BBox
    confidence: float | None = None
    rationale: str = ""


@dataclass(frozen=True)
class DroppedEntry:
    reason: str  # unknown_label | malformed | degenerate
    entry: object
    detail: str = ""


@dataclass
class GroundingParse:
    boxes: list[ParsedBox]
    dropped: list[DroppedEntry]

    def detections(self) -> list[Detection]:
        return [Detection(b.label, b.box, b.confidence) for b in self.boxes]

    def modifications(self) -> list[Modification]:
        return [Modification("ADD", b.label, b.box, b.rationale) for b in self.boxes]


def _find_json_array(raw: str) -> list | None:
    decoder = json.JSONDecoder()
    idx = raw.find("[")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(raw, idx)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, list) and all(isinstance(e, dict) for e in value):
            return value
        idx = raw.find("[", idx + 1)
    return None


def _parse_entry(entry: dict) -> ParsedBox | DroppedEntry:
    label = entry.get("label")
    if label not in LABELS:
        return DroppedEntry("unknown_label", entry, f"label={label!r}")
    wire = entry.get("bbox_2d")
    if not isinstance(wire, list):
        return DroppedEntry("malformed", entry, "missing or non-list bbox_2d")
    try:
        box = bbox_from_wire(wire)
    except ValueError as exc:
        reason = "degenerate" if "degenerate" in str(exc).lower() else "malformed"
        return DroppedEntry(reason, entry, str(exc))
    confidence = entry.get("confidence")
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool) \
            or not (0.0 <= confidence <= 1.0):
        confidence = None
    rationale = entry.get("rationale")
    if not isinstance(rationale, str):
        rationale = ""
    return ParsedBox(label, box, confidence, rationale)


def parse_grounding(raw: str) -> GroundingParse:
    """Extract labeled boxes from raw model text.

    Tolerates surrounding prose and code fences: the first JSON array of
    objects found anywhere in the text wins. Entries with unknown labels or
    unusable boxes are dropped and reported, not fatal.
    """
    array = _find_json_array(raw)
    if array is None:
        raise ParseFailureError(f"no JSON array of objects found in {raw[:120]!r}")
    boxes: list[ParsedBox] = []
    dropped: list[DroppedEntry] = []
    for entry in array:
        parsed = _parse_entry(entry)
        if isinstance(parsed, DroppedEntry):
            dropped.append(parsed)
        else:
            boxes.append(parsed)
    return GroundingParse(boxes, dropped)


# ---------------------------------------------------------------------------
# plan validation


@dataclass(frozen=True)
class PlanViolation:
    kind: str  # mod-mod | mod-basis
    mod_index: int
    other_index: int
    overlap: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "mod_index": self.mod_index,
            "other_index": self.other_index,
            "overlap": self.overlap,
        }


@dataclass
class ValidationReport:
    tolerance: float
    violations: list[PlanViolation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "tolerance": self.tolerance,
            "violations": [v.to_json() for v in self.violations],
        }


def validate_plan(plan: RenovationPlan,
                  tolerance: float = DEFAULT_OVERLAP_TOLERANCE) -> ValidationReport:
    """Check pairwise mod-mod and mod-basis overlaps against a tolerance."""
    report = ValidationReport(tolerance)
    mods = plan.mods
    for i in range(len(mods)):
        for j in range(i + 1, len(mods)):
            ov = iou(mods[i].box, mods[j].box)
            if ov > tolerance:
                report.violations.append(PlanViolation("mod-mod", i, j, ov))
        for k, det in enumerate(plan.basis.items):
            ov = iou(mods[i].box, det.box)
            if ov > tolerance:
                report.violations.append(PlanViolation("mod-basis", i, k, ov))
    return report


# ---------------------------------------------------------------------------
# deterministic stubs


def _component_boxes(pixels: np.ndarray) -> list[BBox]:
    """Closed-rectangle scan: dark connected components whose bounding-box
    perimeter is fully dark and whose interior is >= 95% background."""
    from scipy import ndimage

    height, width = pixels.shape
    dark = pixels < DARK_THRESHOLD
    labeled, count = ndimage.label(dark)
    found: list[tuple[int, int, int, int]] = []
    for sl in ndimage.find_objects(labeled):
        if sl is None:
            continue
        r0, r1 = sl[0].start, sl[0].stop
        c0, c1 = sl[1].start, sl[1].stop
        if (r1 - r0) < 3 or (c1 - c0) < 3:
            continue
        window = dark[r0:r1, c0:c1]
        perimeter_closed = (
            window[0, :].all()
            and window[-1, :].all()
            and window[:, 0].all()
            and window[:, -1].all()
        )
        if not perimeter_closed:
            continue
        interior = window[1:-1, 1:-1]
        background = 1.0 - (np.count_nonzero(interior) / interior.size)
        if background < RECT_INTERIOR_BACKGROUND_MIN:
            continue
        found.append((r0, c0, r1, c1))
    found.sort()
    return [
        BBox(c0 / width, r0 / height, c1 / width, r1 / height)
        for r0, c0, r1, c1 in found
    ]


def _classify(box: BBox) -> str:
    if (1.0 - box.y1) <= DOOR_BOTTOM_SLACK and (box.height / box.width) >= DOOR_MIN_ASPECT:
        return "door"
    return "window"


def stub_detect(sketch: SketchImage) -> DetectionSet:
    """Rule-based stand-in for the detection turn.

    Finds axis-aligned closed rectangles of dark strokes; a rectangle is a
    door when its bottom edge sits within 2% of the canvas bottom and its
    normalized height/width ratio is at least 1.5, else a window. Ordering
    is top-to-bottom then left-to-right.
    """
    items = [Detection(_classify(b), b) for b in _component_boxes(sketch.pixels)]
    return DetectionSet(sketch.meta.source_id, items)


def _window_slots() -> list[BBox]:
    w = WINDOW_WIDTH
    h = w / WINDOW_ASPECT_W_TO_H
    n = int((1.0 + w) // (2.0 * w))
    total = n * w + (n - 1) * w
    left = (1.0 - total) / 2.0
    mid = (BAND_TOP + BAND_BOTTOM) / 2.0
    y0, y1 = mid - h / 2.0, mid + h / 2.0
    return [BBox(left + i * 2.0 * w, y0, left + i * 2.0 * w + w, y1) for i in range(n)]


def _door_slot() -> BBox:
    return BBox(0.5 - DOOR_WIDTH / 2.0, 1.0 - DOOR_HEIGHT, 0.5 + DOOR_WIDTH / 2.0, 1.0)


def _blocked(candidate: BBox, basis: DetectionSet, mods: list[Modification],
             tolerance: float) -> bool:
    if any(iou(candidate, d.box) > tolerance for d in basis.items):
        return True
    return any(iou(candidate, m.box) > tolerance for m in mods)


def stub_propose(sketch: SketchImage, basis: DetectionSet, brief: str,
                 tolerance: float = DEFAULT_OVERLAP_TOLERANCE) -> RenovationPlan:
    """Deterministic grid-fill proposal.

    Windows (2:3 w:h, width 0.12) fill the wall band between y=0.35 and
    y=0.75, evenly spaced with one-window gaps; a slot is skipped when it
    overlaps a basis box or prior mod beyond the tolerance. One centered
    door (w=0.10 reaching the bottom) is added iff the basis has none and
    the door slot itself is free.
    """
    mods: list[Modification] = []
    for slot in _window_slots():
        if _blocked(slot, basis, mods, tolerance):
            continue
        mods.append(Modification("ADD", "window", slot, _rationale("window", brief)))
    if not basis.has_label("door"):
        door = _door_slot()
        if not _blocked(door, basis, mods, tolerance):
            mods.append(Modification("ADD", "door", door, _rationale("door", brief)))
    return RenovationPlan(basis.sketch_id, basis, mods, brief)


def _rationale(label: str, brief: str) -> str:
    if brief:
        return f"add {label}: {brief}"
    return f"add {label}"


# ---------------------------------------------------------------------------
# backend adapters


class StubGuidanceBackend:
    """Runs the deterministic rules and speaks the same text protocol a
    fine-tuned model would."""

    backend_id = "stub"

    def detect(self, sketch: SketchImage) -> str:
        return serialize_boxes(stub_detect(sketch).items)

    def propose(self, sketch: SketchImage, detection_text: str, brief: str) -> str:
        parsed = parse_grounding(detection_text)
        basis = DetectionSet(sketch.meta.source_id, parsed.detections())
        plan = stub_propose(sketch, basis, brief)
        return serialize_boxes(plan.mods, include_rationale=True)


class HttpGuidanceBackend:
    """Adapter for a remote VLM endpoint.

    Protocol: POST {"instruction", "image_b64", "context", "brief"} and the
    endpoint answers {"text": "..."} with the raw model output.
    """

    backend_id = "http"

    def __init__(self, endpoint: str, timeout_s: float = 120.0):
        if not endpoint:
            raise ValueError("http guidance backend requires an endpoint")
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def _call(self, instruction: str, sketch: SketchImage,
              context: str | None, brief: str | None) -> str:
        import requests

        payload = {
            "instruction": instruction,
            "image_b64": base64.b64encode(sketch.to_png_bytes()).decode("ascii"),
            "context": context,
            "brief": brief,
        }
        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise GuidanceBackendError(f"guidance endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise GuidanceBackendError(
                f"guidance endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        body = resp.json()
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise GuidanceBackendError("guidance endpoint response missing 'text'")
        return body["text"]

    def detect(self, sketch: SketchImage) -> str:
        return self._call(DETECT_INSTRUCTION, sketch, None, None)

    def propose(self, sketch: SketchImage, detection_text: str, brief: str) -> str:
        return self._call(UPDATE_INSTRUCTION, sketch, detection_text, brief)


def make_guidance_backend(cfg: dict):
    kind = cfg.get("kind", "stub")
    if kind == "stub":
        return StubGuidanceBackend()
    if kind == "http":
        return HttpGuidanceBackend(cfg.get("endpoint", ""), cfg.get("timeout_s", 120.0))
    raise ValueError(f"unknown guidance backend kind: {kind!r}")


# ---------------------------------------------------------------------------
# stage runners used by the pipeline


def run_detect(sketch: SketchImage, backend) -> tuple[DetectionSet, GroundingParse]:
    raw = backend.detect(sketch)
    parsed = parse_grounding(raw)
    return DetectionSet(sketch.meta.source_id, parsed.detections()), parsed


def run_propose(sketch: SketchImage, basis: DetectionSet, brief: str, backend,
                tolerance: float = DEFAULT_OVERLAP_TOLERANCE) -> RenovationPlan:
    raw = backend.propose(sketch, serialize_boxes(basis.items), brief)
    parsed = parse_grounding(raw)
    return RenovationPlan(basis.sketch_id, basis, parsed.modifications(), brief)
