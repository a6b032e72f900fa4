"""Run persistence: content-addressed blobs + an append-only event log.

Blobs are immutable files named by their sha256; runs are rebuilt by
folding the event log, so replaying any prefix of the log reproduces the
exact state the system was in when that prefix was the whole log.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path


class BlobStore:
    """sha256-addressed immutable byte blobs under root/blobs/."""

    def __init__(self, root: str | Path):
        self.root = Path(root) / "blobs"
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / digest

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self._path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return digest

    def get(self, digest: str) -> bytes:
        path = self._path(digest)
        if not path.exists():
            raise KeyError(f"unknown blob {digest}")
        return path.read_bytes()

    def has(self, digest: str) -> bool:
        return self._path(digest).exists()


class EventLog:
    """Append-only JSONL log; one JSON object per line, sequence-numbered."""

    def __init__(self, root: str | Path):
        self.path = Path(root) / "events.jsonl"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._next_seq = self._scan_next_seq()

    def _scan_next_seq(self) -> int:
        if not self.path.exists():
            return 0
        n = 0
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    n += 1
        return n

    def append(self, event: dict) -> int:
        with self._lock:
            seq = self._next_seq
            record = {"seq": seq, **event}
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(record, separators=(",", ":")))
                f.write("\n")
                f.flush()
                os.fsync(f.fileno())
            self._next_seq = seq + 1
            return seq

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events


class RunStore:
    """Blob store + event log under one root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.blobs = BlobStore(self.root)
        self.events = EventLog(self.root)

    def put_json(self, obj: dict) -> str:
        return self.blobs.put(json.dumps(obj, separators=(",", ":")).encode("utf-8"))

    def get_json(self, digest: str) -> dict:
        return json.loads(self.blobs.get(digest).decode("utf-8"))
