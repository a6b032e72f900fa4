"""Training-corpus construction: paired facades exported as two-turn
conversations, and the component-sketch manifest.

A pair's supervision signal is the diff between its before- and after-
detection sets: matched detections are unchanged structure, unmatched
after-detections become ADD modifications.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import bbox_from_wire, iou
from .guidance import (
    DETECT_INSTRUCTION,
    UPDATE_INSTRUCTION,
    Detection,
    DetectionSet,
    LABELS,
    Modification,
    RenovationPlan,
    detections_from_json,
    serialize_boxes,
)
from .sketch import SketchImage, SketchMeta

DEFAULT_MATCH_THRESHOLD = 0.5


class UnmatchedBeforeError(ValueError):
    """A before-detection found no after-detection partner; the pair does
    not correspond in geometry."""

    def __init__(self, indices: list[int], pair_id: str = ""):
        self.indices = indices
        self.pair_id = pair_id
        where = f" in pair {pair_id!r}" if pair_id else ""
        super().__init__(f"before-detections {indices} have no match{where}")


@dataclass
class FacadePair:
    pair_id: str
    before_sketch: SketchImage
    before: DetectionSet
    after_sketch: SketchImage
    after: DetectionSet
    meta: SketchMeta = field(default_factory=SketchMeta)
    before_ref: str = ""  # path recorded as the sample's image reference

    def __post_init__(self) -> None:
        if self.before_sketch.size != self.after_sketch.size:
            raise ValueError(
                f"pair {self.pair_id!r}: before {self.before_sketch.size} and "
                f"after {self.after_sketch.size} dims differ"
            )


@dataclass(frozen=True)
class Turn:
    instruction: str
    response: str


@dataclass
class ConversationSample:
    image_ref: str
    turn1: Turn
    turn2: Turn

    def to_json(self) -> dict:
        return {
            "image": self.image_ref,
            "conversations": [
                {"role": "user", "content": self.turn1.instruction},
                {"role": "assistant", "content": self.turn1.response},
                {"role": "user", "content": self.turn2.instruction},
                {"role": "assistant", "content": self.turn2.response},
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConversationSample":
        conv = obj["conversations"]
        return cls(
            obj["image"],
            Turn(conv[0]["content"], conv[1]["content"]),
            Turn(conv[2]["content"], conv[3]["content"]),
        )


CONVERSATION_SCHEMA = {
    "type": "object",
    "required": ["image", "conversations"],
    "additionalProperties": False,
    "properties": {
        "image": {"type": "string"},
        "conversations": {
            "type": "array",
            "minItems": 4,
            "maxItems": 4,
            "items": {
                "type": "object",
                "required": ["role", "content"],
                "additionalProperties": False,
                "properties": {
                    "role": {"enum": ["user", "assistant"]},
                    "content": {"type": "string"},
                },
            },
        },
    },
}


# ---------------------------------------------------------------------------
# pair diffing


def derive_plan(before: DetectionSet, after: DetectionSet,
                match_threshold: float = DEFAULT_MATCH_THRESHOLD,
                pair_id: str = "") -> RenovationPlan:
    """Diff a corresponding pair into a plan of ADD modifications.

    Greedy maximum-IoU matching between same-label detections at or above
    the threshold; ties break on (smaller before index, smaller after
    index). Every unmatched after-detection becomes an ADD; an unmatched
    before-detection is a hard error because pairs must correspond.
    """
    candidates = []
    for i, b in enumerate(before.items):
        for j, a in enumerate(after.items):
            if b.label != a.label:
                continue
            ov = iou(b.box, a.box)
            if ov >= match_threshold:
                candidates.append((ov, i, j))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))

    matched_before: set[int] = set()
    matched_after: set[int] = set()
    for ov, i, j in candidates:
        if i in matched_before or j in matched_after:
            continue
        matched_before.add(i)
        matched_after.add(j)

    unmatched_before = [i for i in range(len(before.items)) if i not in matched_before]
    if unmatched_before:
        raise UnmatchedBeforeError(unmatched_before, pair_id)

    mods = [
        Modification("ADD", a.label, a.box)
        for j, a in enumerate(after.items)
        if j not in matched_after
    ]
    return RenovationPlan(before.sketch_id, before, mods)


# ---------------------------------------------------------------------------
# conversation export


def pair_to_sample(pair: FacadePair,
                   match_threshold: float = DEFAULT_MATCH_THRESHOLD) -> ConversationSample:
    plan = derive_plan(pair.before, pair.after, match_threshold, pair.pair_id)
    return ConversationSample(
        pair.before_ref,
        Turn(DETECT_INSTRUCTION, serialize_boxes(pair.before.items)),
        Turn(UPDATE_INSTRUCTION, serialize_boxes(plan.mods)),
    )


def export_conversations(pairs: list[FacadePair], out_path: str | Path,
                         match_threshold: float = DEFAULT_MATCH_THRESHOLD) -> int:
    """Write one conversation JSON object per line per pair; returns the count."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with out_path.open("w", encoding="utf-8") as f:
        for pair in pairs:
            sample = pair_to_sample(pair, match_threshold)
            f.write(json.dumps(sample.to_json(), separators=(",", ":")))
            f.write("\n")
            n += 1
    return n


# ---------------------------------------------------------------------------
# component manifest


@dataclass(frozen=True)
class ComponentEntry:
    component_id: str
    label: str
    path: str
    dims: tuple[int, int]  # (width, height)

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class ComponentManifest:
    entries: list[ComponentEntry] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "entries": [
                {
                    "component_id": e.component_id,
                    "label": e.label,
                    "path": e.path,
                    "dims": list(e.dims),
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ComponentManifest":
        return cls(
            [
                ComponentEntry(
                    e["component_id"], e["label"], e["path"],
                    (int(e["dims"][0]), int(e["dims"][1])),
                )
                for e in obj.get("entries", [])
            ]
        )


@dataclass
class ManifestReport:
    violations: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"valid": self.valid, "violations": self.violations, "counts": self.counts}


def validate_manifest(manifest: ComponentManifest, root: str | Path) -> ManifestReport:
    """Check files exist, ids are unique, and declared dims match the PNGs."""
    root = Path(root)
    report = ManifestReport(counts={label: 0 for label in LABELS})
    seen: set[str] = set()
    for e in manifest.entries:
        report.counts[e.label] += 1
        if e.component_id in seen:
            report.violations.append(f"duplicate component_id: {e.component_id!r}")
        seen.add(e.component_id)
        path = root / e.path
        if not path.is_file():
            report.violations.append(f"{e.component_id}: missing file {e.path}")
            continue
        try:
            img = SketchImage.load_png(path)
        except Exception as exc:
            report.violations.append(f"{e.component_id}: unreadable png ({exc})")
            continue
        if (img.width, img.height) != e.dims:
            report.violations.append(
                f"{e.component_id}: dims {img.width}x{img.height} != declared "
                f"{e.dims[0]}x{e.dims[1]}"
            )
    return report


# ---------------------------------------------------------------------------
# directory layout loaders (pairs/<id>/{before,after}.{png,json} + meta.json)


def load_pair_dir(pair_dir: str | Path) -> FacadePair:
    pair_dir = Path(pair_dir)
    before_png = pair_dir / "before.png"
    meta_path = pair_dir / "meta.json"
    meta = SketchMeta.from_json(json.loads(meta_path.read_text())) if meta_path.exists() \
        else SketchMeta()
    before = detections_from_json(json.loads((pair_dir / "before.json").read_text()))
    after = detections_from_json(json.loads((pair_dir / "after.json").read_text()))
    return FacadePair(
        pair_id=pair_dir.name,
        before_sketch=SketchImage.load_png(before_png, meta),
        before=before,
        after_sketch=SketchImage.load_png(pair_dir / "after.png", meta),
        after=after,
        meta=meta,
        before_ref=str(before_png),
    )


def load_pairs(pairs_dir: str | Path) -> list[FacadePair]:
    pairs_dir = Path(pairs_dir)
    return [load_pair_dir(d) for d in sorted(pairs_dir.iterdir()) if d.is_dir()]


def load_manifest(components_dir: str | Path) -> ComponentManifest:
    path = Path(components_dir) / "manifest.json"
    return ComponentManifest.from_json(json.loads(path.read_text()))
