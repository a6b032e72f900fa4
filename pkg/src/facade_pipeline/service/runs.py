"""Resumable pipeline runs: a per-run state machine with a human approval
gate, persisted as events + content-addressed artifacts.

States advance one stage at a time along
CREATED -> DETECTED -> PLANNED -> PLAN_APPROVED -> ENHANCED -> RENDERED,
with FAILED reachable from any of them. The PLANNED -> PLAN_APPROVED edge
only moves on an explicit approve; advance never crosses it.
"""

from __future__ import annotations

import hashlib
import threading
import time
import uuid
from dataclasses import dataclass, field

from ..guidance import (
    DEFAULT_OVERLAP_TOLERANCE,
    Modification,
    RenovationPlan,
    ValidationReport,
    detections_from_json,
    detections_to_json,
    make_guidance_backend,
    plan_from_json,
    plan_to_json,
    run_detect,
    run_propose,
    validate_plan,
)
from ..geometry import bbox_from_wire
from ..rendering import (
    DEFAULT_MIN_FIDELITY,
    build_render_spec,
    make_render_backend,
    render_meta_json,
    render_stage,
    rgb_png_bytes,
)
from ..sketch import SketchImage, SketchMeta
from ..synthesis import (
    DEFAULT_MARGIN,
    EnhancedSketch,
    StubComponentBackend,
    StubCompositor,
    enhance,
    enhanced_meta_json,
)
from .store import RunStore

STATE_ORDER = ("CREATED", "DETECTED", "PLANNED", "PLAN_APPROVED", "ENHANCED", "RENDERED")
FAILED = "FAILED"
TERMINAL_OK = "RENDERED"

EDIT_OPS = ("add", "move", "delete", "relabel")


class UnknownRunError(KeyError):
    pass


class InvalidStateError(RuntimeError):
    """The requested transition is not legal from the run's current state."""


class ConflictError(RuntimeError):
    """Another mutation holds this run; retry later."""


class ValidationRejectedError(ValueError):
    """A plan edit failed validation; the plan is unchanged."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("edit rejected by plan validation")


class InvalidSketchError(ValueError):
    """Uploaded raster is not a usable facade sketch."""


@dataclass
class PipelineConfig:
    """Frozen-per-run knobs: backend selections plus every stage default."""

    guidance: dict = field(default_factory=lambda: {"kind": "stub"})
    component: dict = field(default_factory=lambda: {"kind": "stub"})
    compositor: dict = field(default_factory=lambda: {"kind": "stub"})
    render: dict = field(default_factory=lambda: {"kind": "stub"})
    tolerance: float = DEFAULT_OVERLAP_TOLERANCE
    margin: float = DEFAULT_MARGIN
    match_threshold: float = 0.5
    min_fidelity: float = DEFAULT_MIN_FIDELITY
    seed: int = 0
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.tolerance <= 1.0):
            raise ValueError(f"tolerance must be in [0,1], got {self.tolerance}")
        if not (0.0 <= self.margin <= 0.5):
            raise ValueError(f"margin must be in [0,0.5], got {self.margin}")
        if not (0.0 < self.match_threshold <= 1.0):
            raise ValueError(f"match_threshold must be in (0,1], got {self.match_threshold}")
        if not (0.0 <= self.min_fidelity <= 1.0):
            raise ValueError(f"min_fidelity must be in [0,1], got {self.min_fidelity}")
        if self.timeout_s <= 0:
            raise ValueError(f"timeout_s must be positive, got {self.timeout_s}")
        for name in ("guidance", "component", "compositor", "render"):
            cfg = getattr(self, name)
            if not isinstance(cfg, dict) or "kind" not in cfg:
                raise ValueError(f"{name} backend config must be a dict with 'kind'")

    def to_json(self) -> dict:
        return {
            "guidance": self.guidance,
            "component": self.component,
            "compositor": self.compositor,
            "render": self.render,
            "tolerance": self.tolerance,
            "margin": self.margin,
            "match_threshold": self.match_threshold,
            "min_fidelity": self.min_fidelity,
            "seed": self.seed,
            "timeout_s": self.timeout_s,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class RunState:
    run_id: str
    state: str
    brief: str
    seed: int
    config: PipelineConfig
    artifacts: dict = field(default_factory=dict)  # name -> blob digest
    edit_log: list = field(default_factory=list)
    failure_cause: str | None = None
    failure_from: str | None = None

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "state": self.state,
            "brief": self.brief,
            "seed": self.seed,
            "config": self.config.to_json(),
            "artifacts": dict(self.artifacts),
            "edit_log": list(self.edit_log),
            "failure_cause": self.failure_cause,
        }


# ---------------------------------------------------------------------------
# event fold (the one definition both the live path and replay share)


def apply_event(states: dict, event: dict) -> None:
    etype = event["type"]
    rid = event["run_id"]
    if etype == "created":
        states[rid] = RunState(
            run_id=rid,
            state="CREATED",
            brief=event["brief"],
            seed=event["seed"],
            config=PipelineConfig.from_json(event["config"]),
            artifacts={"sketch": event["sketch_blob"]},
        )
        return
    run = states[rid]
    if etype == "advanced":
        run.state = event["to"]
        run.artifacts.update(event["artifacts"])
    elif etype == "approved":
        run.state = "PLAN_APPROVED"
    elif etype == "plan_edited":
        run.artifacts["plan"] = event["plan_blob"]
        run.edit_log.append(event["edit"])
    elif etype == "failed":
        run.failure_from = run.state
        run.state = FAILED
        run.failure_cause = event["cause"]
    elif etype == "retried":
        run.state = event["to"]
        run.failure_cause = None
        run.failure_from = None
    else:
        raise ValueError(f"unknown event type {etype!r}")


def replay(events: list[dict]) -> dict:
    states: dict = {}
    for event in events:
        apply_event(states, event)
    return states


# ---------------------------------------------------------------------------
# the run service


def _sketch_id_for(data: bytes) -> str:
    return "sketch-" + hashlib.sha256(data).hexdigest()[:12]


def make_component_backend(cfg: dict):
    if cfg.get("kind", "stub") == "stub":
        return StubComponentBackend()
    raise ValueError(f"unknown component backend kind: {cfg.get('kind')!r}")


def make_compositor(cfg: dict):
    if cfg.get("kind", "stub") == "stub":
        return StubCompositor()
    raise ValueError(f"unknown compositor kind: {cfg.get('kind')!r}")


class RunService:
    """Single-writer-per-run orchestration over a RunStore."""

    def __init__(self, store: RunStore):
        self.store = store
        self._runs: dict = replay(store.events.read_all())
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    # -- plumbing

    def _lock_for(self, run_id: str) -> threading.Lock:
        with self._locks_guard:
            if run_id not in self._locks:
                self._locks[run_id] = threading.Lock()
            return self._locks[run_id]

    def _append(self, event: dict) -> None:
        self.store.events.append(event)
        apply_event(self._runs, event)

    def get(self, run_id: str) -> RunState:
        try:
            return self._runs[run_id]
        except KeyError:
            raise UnknownRunError(run_id) from None

    def list_runs(self) -> list[RunState]:
        return list(self._runs.values())

    def artifact(self, run_id: str, name: str) -> bytes:
        run = self.get(run_id)
        if name not in run.artifacts:
            raise KeyError(f"run {run_id} has no {name!r} artifact yet")
        return self.store.blobs.get(run.artifacts[name])

    def _sketch(self, run: RunState) -> SketchImage:
        data = self.store.blobs.get(run.artifacts["sketch"])
        sid = _sketch_id_for(data)
        return SketchImage.from_png_bytes(data, SketchMeta(source_id=sid))

    def _plan(self, run: RunState) -> RenovationPlan:
        return plan_from_json(self.store.get_json(run.artifacts["plan"]))

    # -- lifecycle

    def create_run(self, sketch_png: bytes, brief: str = "",
                   config: PipelineConfig | None = None) -> RunState:
        config = config if config is not None else PipelineConfig()
        try:
            sketch = SketchImage.from_png_bytes(sketch_png)
        except Exception as exc:
            raise InvalidSketchError(f"sketch is not a decodable image: {exc}") from exc
        problems = sketch.validate_facade()
        if problems:
            raise InvalidSketchError("; ".join(problems))
        run_id = uuid.uuid4().hex[:12]
        blob = self.store.blobs.put(sketch_png)
        self._append({
            "type": "created",
            "run_id": run_id,
            "ts": time.time(),
            "brief": brief,
            "seed": config.seed,
            "config": config.to_json(),
            "sketch_blob": blob,
        })
        return self.get(run_id)

    def advance(self, run_id: str) -> RunState:
        lock = self._lock_for(run_id)
        if not lock.acquire(blocking=False):
            raise ConflictError(f"run {run_id} is busy")
        try:
            run = self.get(run_id)
            if run.state == FAILED:
                raise InvalidStateError(f"run {run_id} is FAILED: {run.failure_cause}")
            if run.state == TERMINAL_OK:
                raise InvalidStateError(f"run {run_id} is already RENDERED")
            if run.state == "PLANNED":
                raise InvalidStateError(
                    "plan awaits approval; call approve before advancing"
                )
            stage = {
                "CREATED": self._stage_detect,
                "DETECTED": self._stage_propose,
                "PLAN_APPROVED": self._stage_enhance,
                "ENHANCED": self._stage_render,
            }[run.state]
            try:
                to_state, artifacts = stage(run)
            except Exception as exc:
                self._append({
                    "type": "failed",
                    "run_id": run_id,
                    "ts": time.time(),
                    "cause": f"{type(exc).__name__}: {exc}",
                })
                return self.get(run_id)
            self._append({
                "type": "advanced",
                "run_id": run_id,
                "ts": time.time(),
                "from": run.state,
                "to": to_state,
                "artifacts": artifacts,
            })
            return self.get(run_id)
        finally:
            lock.release()

    def approve(self, run_id: str) -> RunState:
        lock = self._lock_for(run_id)
        if not lock.acquire(blocking=False):
            raise ConflictError(f"run {run_id} is busy")
        try:
            run = self.get(run_id)
            if run.state != "PLANNED":
                raise InvalidStateError(
                    f"approve requires state PLANNED, run is {run.state}"
                )
            self._append({"type": "approved", "run_id": run_id, "ts": time.time()})
            return self.get(run_id)
        finally:
            lock.release()

    def edit_plan(self, run_id: str, edit: dict) -> RenovationPlan:
        lock = self._lock_for(run_id)
        if not lock.acquire(blocking=False):
            raise ConflictError(f"run {run_id} is busy")
        try:
            run = self.get(run_id)
            if run.state != "PLANNED":
                raise InvalidStateError(
                    f"plan edits require state PLANNED, run is {run.state}"
                )
            plan = self._plan(run)
            new_plan = _apply_edit(plan, edit)
            report = validate_plan(new_plan, run.config.tolerance)
            if not report.valid:
                raise ValidationRejectedError(report)
            plan_blob = self.store.put_json(plan_to_json(new_plan))
            self._append({
                "type": "plan_edited",
                "run_id": run_id,
                "ts": time.time(),
                "plan_blob": plan_blob,
                "edit": {"timestamp": time.time(), "op": edit["op"], "payload": edit},
            })
            return new_plan
        finally:
            lock.release()

    def retry(self, run_id: str) -> RunState:
        lock = self._lock_for(run_id)
        if not lock.acquire(blocking=False):
            raise ConflictError(f"run {run_id} is busy")
        try:
            run = self.get(run_id)
            if run.state != FAILED:
                raise InvalidStateError(f"retry requires state FAILED, run is {run.state}")
            self._append({
                "type": "retried",
                "run_id": run_id,
                "ts": time.time(),
                "to": run.failure_from or "CREATED",
            })
            return self.get(run_id)
        finally:
            lock.release()

    # -- stage execution

    def _stage_detect(self, run: RunState) -> tuple[str, dict]:
        sketch = self._sketch(run)
        backend = make_guidance_backend(run.config.guidance)
        detections, _ = run_detect(sketch, backend)
        blob = self.store.put_json(detections_to_json(detections))
        return "DETECTED", {"detections": blob}

    def _stage_propose(self, run: RunState) -> tuple[str, dict]:
        sketch = self._sketch(run)
        backend = make_guidance_backend(run.config.guidance)
        basis = detections_from_json(self.store.get_json(run.artifacts["detections"]))
        plan = run_propose(sketch, basis, run.brief, backend, run.config.tolerance)
        blob = self.store.put_json(plan_to_json(plan))
        return "PLANNED", {"plan": blob}

    def _stage_enhance(self, run: RunState) -> tuple[str, dict]:
        sketch = self._sketch(run)
        plan = self._plan(run)
        enhanced = enhance(
            sketch, plan,
            make_component_backend(run.config.component),
            make_compositor(run.config.compositor),
            margin=run.config.margin,
            seed=run.config.seed,
            tolerance=run.config.tolerance,
        )
        png_blob = self.store.blobs.put(enhanced.sketch.to_png_bytes())
        meta_blob = self.store.put_json(enhanced_meta_json(enhanced))
        return "ENHANCED", {"enhanced": png_blob, "enhanced_meta": meta_blob}

    def _stage_render(self, run: RunState) -> tuple[str, dict]:
        plan = self._plan(run)
        enhanced_png = self.store.blobs.get(run.artifacts["enhanced"])
        enhanced_meta = self.store.get_json(run.artifacts["enhanced_meta"])
        enhanced = EnhancedSketch(
            SketchImage.from_png_bytes(enhanced_png),
            plan,
            [],
            enhanced_meta["margin"],
        )
        spec = build_render_spec(run.brief, run.seed)
        backend = make_render_backend(run.config.render)
        result = render_stage(enhanced, backend, spec, run.config.min_fidelity)
        png_blob = self.store.blobs.put(rgb_png_bytes(result.image))
        meta_blob = self.store.put_json(render_meta_json(result))
        return "RENDERED", {"render": png_blob, "render_meta": meta_blob}


def _apply_edit(plan: RenovationPlan, edit: dict) -> RenovationPlan:
    """Pure edit application; raises ValueError on malformed edits."""
    if not isinstance(edit, dict) or edit.get("op") not in EDIT_OPS:
        raise ValueError(f"edit op must be one of {EDIT_OPS}")
    op = edit["op"]
    mods = list(plan.mods)
    if op == "add":
        mods.append(Modification(
            "ADD", edit["label"], bbox_from_wire(edit["bbox_2d"]),
            edit.get("rationale", ""),
        ))
    else:
        index = edit.get("index")
        if not isinstance(index, int) or not (0 <= index < len(mods)):
            raise ValueError(f"edit index out of range: {index}")
        if op == "move":
            old = mods[index]
            mods[index] = Modification(
                old.action, old.label, bbox_from_wire(edit["bbox_2d"]), old.rationale
            )
        elif op == "delete":
            del mods[index]
        elif op == "relabel":
            old = mods[index]
            mods[index] = Modification(old.action, edit["label"], old.box, old.rationale)
    return RenovationPlan(plan.sketch_id, plan.basis, mods, plan.brief)
