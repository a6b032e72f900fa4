"""Deterministic synthetic sketches and corpora.

Everything here is seeded and reproducible: facade sketches with known
component boxes, before/after pair corpora, component-sketch corpora, and
scribble rasters for randomized property checks. Tests and the batch
harness fixtures are built from these generators.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from .dataset import ComponentEntry, ComponentManifest, FacadePair
from .geometry import BBox
from .guidance import Detection, DetectionSet, Modification, RenovationPlan
from .sketch import SketchImage, SketchMeta
from .synthesis import stub_generate


def draw_rect_outline(px: np.ndarray, r0: int, c0: int, r1: int, c1: int,
                      value: int = 0) -> None:
    """1px rectangle outline on rows r0..r1, cols c0..c1 (inclusive)."""
    px[r0, c0 : c1 + 1] = value
    px[r1, c0 : c1 + 1] = value
    px[r0 : r1 + 1, c0] = value
    px[r0 : r1 + 1, c1] = value


def _pixel_box(r0: int, c0: int, r1: int, c1: int, width: int, height: int) -> BBox:
    return BBox(c0 / width, r0 / height, (c1 + 1) / width, (r1 + 1) / height)


def facade_sketch(seed: int, width: int = 256, height: int = 192,
                  source_id: str | None = None) -> tuple[SketchImage, DetectionSet]:
    """Facade outline plus a random set of window/door rectangles.

    Returns the sketch and its ground-truth detections (computed from the
    drawn pixel extents, not from any detector).
    """
    rng = random.Random(seed)
    px = np.full((height, width), 255, dtype=np.uint8)
    draw_rect_outline(px, int(0.08 * height), int(0.04 * width),
                      int(0.985 * height) - 1, int(0.96 * width) - 1)

    items: list[Detection] = []
    cols = [0.10, 0.32, 0.54, 0.76]
    rows = [0.20, 0.45]
    cells = [(r, c) for r in rows for c in cols]
    rng.shuffle(cells)
    for r, c in cells[: rng.randint(2, 5)]:
        w_px = int(0.12 * width)
        h_px = int(0.14 * height)
        c0 = int(c * width)
        r0 = int(r * height)
        draw_rect_outline(px, r0, c0, r0 + h_px - 1, c0 + w_px - 1)
        items.append(Detection("window", _pixel_box(r0, c0, r0 + h_px - 1,
                                                    c0 + w_px - 1, width, height)))
    if rng.random() < 0.5:
        r1 = int(0.985 * height) - 1
        r0 = r1 - int(0.24 * height)
        c0 = int(0.45 * width)
        c1 = c0 + int(0.10 * width) - 1
        draw_rect_outline(px, r0, c0, r1, c1)
        items.append(Detection("door", _pixel_box(r0, c0, r1, c1, width, height)))

    items.sort(key=lambda d: (d.box.y0, d.box.x0))
    sid = source_id if source_id is not None else f"facade-{seed}"
    sketch = SketchImage(px, SketchMeta(source_id=sid, width_m=15.0, height_m=7.5,
                                        roof_type="flat"))
    return sketch, DetectionSet(sid, items)


def scribble_sketch(seed: int, width: int = 256, height: int = 192) -> SketchImage:
    """Random line strokes; used for randomized preservation checks."""
    rng = np.random.default_rng(seed)
    px = np.full((height, width), 255, dtype=np.uint8)
    for _ in range(int(rng.integers(4, 12))):
        if rng.random() < 0.5:
            r = int(rng.integers(0, height))
            c0, c1 = sorted(rng.integers(0, width, 2).tolist())
            px[r, c0 : c1 + 1] = int(rng.integers(0, 128))
        else:
            c = int(rng.integers(0, width))
            r0, r1 = sorted(rng.integers(0, height, 2).tolist())
            px[r0 : r1 + 1, c] = int(rng.integers(0, 128))
    return SketchImage(px, SketchMeta(source_id=f"scribble-{seed}"))


_GRID = [(gx * 0.25, gy * 0.25) for gy in range(4) for gx in range(4)]


def _cell_box(rng: random.Random, cell: tuple[float, float]) -> BBox:
    gx, gy = cell
    w = rng.uniform(0.10, 0.16)
    h = rng.uniform(0.10, 0.16)
    x0 = gx + rng.uniform(0.02, 0.23 - w)
    y0 = gy + rng.uniform(0.02, 0.23 - h)
    return BBox(x0, y0, x0 + w, y0 + h)


def random_plan(seed: int, max_mods: int = 5) -> RenovationPlan:
    """Plan of ADD mods in distinct grid cells; always validates (iou 0)."""
    rng = random.Random(seed)
    cells = list(_GRID)
    rng.shuffle(cells)
    mods = [
        Modification("ADD", rng.choice(("window", "door")), _cell_box(rng, cell))
        for cell in cells[: rng.randint(0, max_mods)]
    ]
    return RenovationPlan(f"plan-{seed}", DetectionSet(f"plan-{seed}"), mods)


def random_detection_pair(seed: int, max_side: int = 8,
                          jitter: float = 0.008) -> tuple[DetectionSet, DetectionSet]:
    """Corresponding (before, after) detection sets.

    Every before box reappears in after (optionally jittered, keeping IoU
    far above 0.5); after gains extra boxes in unused grid cells. Cross-cell
    boxes can only graze, so matchings are unambiguous.
    """
    rng = random.Random(seed)
    cells = list(_GRID)
    rng.shuffle(cells)
    n_before = rng.randint(0, min(4, max_side))
    n_extra = rng.randint(0, min(4, max_side - n_before))

    before_items: list[Detection] = []
    after_items: list[Detection] = []
    for cell in cells[:n_before]:
        label = rng.choice(("window", "door"))
        box = _cell_box(rng, cell)
        before_items.append(Detection(label, box))
        dx = rng.uniform(-jitter, jitter)
        dy = rng.uniform(-jitter, jitter)
        moved = BBox(
            min(max(box.x0 + dx, 0.0), 1.0 - box.width),
            min(max(box.y0 + dy, 0.0), 1.0 - box.height),
            min(max(box.x0 + dx, 0.0), 1.0 - box.width) + box.width,
            min(max(box.y0 + dy, 0.0), 1.0 - box.height) + box.height,
        )
        after_items.append(Detection(label, moved))
    for cell in cells[n_before : n_before + n_extra]:
        after_items.append(Detection(rng.choice(("window", "door")), _cell_box(rng, cell)))
    rng.shuffle(after_items)
    sid = f"pair-{seed}"
    return DetectionSet(sid, before_items), DetectionSet(sid, after_items)


def make_pair(seed: int, width: int = 256, height: int = 192) -> FacadePair:
    """Facade pair: after = before plus extra drawn components."""
    rng = random.Random(seed * 7919 + 11)
    before_sketch, before = facade_sketch(seed, width, height, source_id=f"pair-{seed:04d}")
    px = before_sketch.pixels.copy()
    after_items = list(before.items)

    free_cols = [0.10, 0.32, 0.54, 0.76]
    used_x0 = {round(d.box.x0 * 100) for d in before.items}
    candidates = [c for c in free_cols if round(c * 100) not in used_x0]
    rng.shuffle(candidates)
    for c in candidates[: rng.randint(1, max(1, len(candidates)))]:
        w_px = int(0.12 * width)
        h_px = int(0.14 * height)
        c0 = int(c * width)
        r0 = int(0.70 * height)
        draw_rect_outline(px, r0, c0, r0 + h_px - 1, c0 + w_px - 1)
        after_items.append(Detection("window", _pixel_box(r0, c0, r0 + h_px - 1,
                                                          c0 + w_px - 1, width, height)))

    after_sketch = SketchImage(px, before_sketch.meta)
    after = DetectionSet(before.sketch_id, after_items)
    return FacadePair(
        pair_id=f"pair-{seed:04d}",
        before_sketch=before_sketch,
        before=before,
        after_sketch=after_sketch,
        after=after,
        meta=before_sketch.meta,
    )


def write_pair_corpus(out_dir: str | Path, count: int, seed: int = 0) -> list[FacadePair]:
    """Materialize pairs/<id>/{before,after}.{png,json} + meta.json on disk."""
    from .guidance import detections_to_json

    out_dir = Path(out_dir)
    pairs = []
    for i in range(count):
        pair = make_pair(seed + i)
        pair_dir = out_dir / pair.pair_id
        pair_dir.mkdir(parents=True, exist_ok=True)
        before_png = pair_dir / "before.png"
        pair.before_sketch.save_png(before_png)
        pair.after_sketch.save_png(pair_dir / "after.png")
        (pair_dir / "before.json").write_text(json.dumps(detections_to_json(pair.before)))
        (pair_dir / "after.json").write_text(json.dumps(detections_to_json(pair.after)))
        (pair_dir / "meta.json").write_text(json.dumps(pair.meta.to_json()))
        pair.before_ref = str(before_png)
        pairs.append(pair)
    return pairs


def write_component_corpus(out_dir: str | Path, doors: int = 107,
                           windows: int = 164) -> ComponentManifest:
    """Component corpus of procedural sketches plus its manifest.json."""
    out_dir = Path(out_dir)
    entries: list[ComponentEntry] = []
    specs = [("door", i, 24 + (i % 5) * 2, 48 + (i % 7) * 2) for i in range(doors)]
    specs += [("window", i, 30 + (i % 6) * 2, 22 + (i % 5) * 2) for i in range(windows)]
    for label, i, w, h in specs:
        rel = f"{label}/{label}-{i:03d}.png"
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        stub_generate(label, w, h).save_png(path)
        entries.append(ComponentEntry(f"{label}-{i:03d}", label, rel, (w, h)))
    manifest = ComponentManifest(entries)
    (out_dir / "manifest.json").write_text(json.dumps(manifest.to_json()))
    return manifest


def write_batch_corpus(out_dir: str | Path, count: int = 10, seed: int = 0) -> list[Path]:
    """Standalone facade sketches for the batch harness."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        sketch, _ = facade_sketch(seed + i, source_id=f"batch-{i:03d}")
        path = out_dir / f"sketch-{i:03d}.png"
        sketch.save_png(path)
        paths.append(path)
    return paths
