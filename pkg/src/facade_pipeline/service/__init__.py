"""Run orchestration: state machine, persistence, batch harness, HTTP API."""

from .runs import (  # noqa: F401
    ConflictError,
    InvalidSketchError,
    InvalidStateError,
    PipelineConfig,
    RunService,
    RunState,
    UnknownRunError,
    ValidationRejectedError,
)
from .store import RunStore  # noqa: F401
