"""Batch harnesses: run the full stub pipeline over a corpus of sketches
with auto-approval and report per-sketch health.

Two modes mirror the two evaluation protocols: "reconstruct" feeds
training-distribution sketches back through the pipeline, "generate" feeds
held-out sketches. Mechanically both run the same stages; the mode is
recorded in the report.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..guidance import plan_from_json, validate_plan
from ..sketch import SketchImage, pixels_equal_outside, rasterize_mask
from .runs import FAILED, PipelineConfig, RunService
from .store import RunStore

MODES = ("reconstruct", "generate")


@dataclass
class BatchRow:
    sketch: str
    run_id: str = ""
    plan_valid: bool | None = None
    preservation_ok: bool | None = None
    fidelity: float | None = None
    wall_time_s: float = 0.0
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "sketch": self.sketch,
            "run_id": self.run_id,
            "plan_valid": self.plan_valid,
            "preservation_ok": self.preservation_ok,
            "fidelity": self.fidelity,
            "wall_time_s": self.wall_time_s,
            "error": self.error,
        }


@dataclass
class BatchReport:
    mode: str
    rows: list[BatchRow] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.error is not None)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "total": len(self.rows),
            "failures": self.failures,
            "rows": [r.to_json() for r in self.rows],
        }


def _run_one(service: RunService, png_path: Path, config: PipelineConfig) -> BatchRow:
    row = BatchRow(sketch=png_path.name)
    started = time.perf_counter()
    try:
        run = service.create_run(png_path.read_bytes(), brief="", config=config)
        row.run_id = run.run_id
        run = service.advance(run.run_id)  # -> DETECTED
        run = service.advance(run.run_id)  # -> PLANNED
        if run.state == FAILED:
            raise RuntimeError(run.failure_cause or "stage failed")
        plan = plan_from_json(service.store.get_json(run.artifacts["plan"]))
        row.plan_valid = validate_plan(plan, config.tolerance).valid
        service.approve(run.run_id)
        run = service.advance(run.run_id)  # -> ENHANCED
        run = service.advance(run.run_id)  # -> RENDERED
        if run.state == FAILED:
            raise RuntimeError(run.failure_cause or "stage failed")

        base = SketchImage.from_png_bytes(service.artifact(run.run_id, "sketch"))
        merged = SketchImage.from_png_bytes(service.artifact(run.run_id, "enhanced"))
        mask = rasterize_mask(base.size, [m.box for m in plan.mods], config.margin)
        row.preservation_ok = pixels_equal_outside(base, merged, mask)
        render_meta = service.store.get_json(run.artifacts["render_meta"])
        row.fidelity = render_meta["fidelity"]
    except Exception as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    row.wall_time_s = time.perf_counter() - started
    return row


def run_batch(corpus_dir: str | Path, mode: str, store_root: str | Path,
              config: PipelineConfig | None = None, jobs: int = 1) -> BatchReport:
    """Run every *.png in corpus_dir through the pipeline; per-item failures
    are recorded and the batch continues."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    config = config if config is not None else PipelineConfig()
    corpus = sorted(Path(corpus_dir).glob("*.png"))
    service = RunService(RunStore(store_root))
    report = BatchReport(mode=mode)
    if jobs <= 1:
        report.rows = [_run_one(service, p, config) for p in corpus]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            report.rows = list(pool.map(lambda p: _run_one(service, p, config), corpus))
    return report


def write_report(report: BatchReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2))
    with (out_dir / "report.csv").open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=[
            "sketch", "run_id", "plan_valid", "preservation_ok", "fidelity",
            "wall_time_s", "error",
        ])
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row.to_json())


def format_report(report: BatchReport) -> str:
    lines = [f"mode={report.mode} total={len(report.rows)} failures={report.failures}"]
    for r in report.rows:
        if r.error:
            lines.append(f"  {r.sketch}: ERROR {r.error}")
        else:
            lines.append(
                f"  {r.sketch}: plan_valid={r.plan_valid} "
                f"preserved={r.preservation_ok} fidelity={r.fidelity:.4f} "
                f"t={r.wall_time_s:.2f}s"
            )
    return "\n".join(lines)
