from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Any, Iterable, Iterator


class SystemClock:
    """Wall-clock seconds, forced non-decreasing."""

    def __init__(self):
        self._last = 0.0
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            self._last = max(self._last, time.time())
            return self._last


class LogicalClock:
    """Deterministic clock for reproducible runs: every reading advances by ``step``."""

    def __init__(self, start: float = 0.0, step: float = 1.0):
        self._t = float(start)
        self.step = float(step)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            self._t += self.step
            return self._t


def make_clock(kind: str):
    if kind == "logical":
        return LogicalClock()
    if kind == "system":
        return SystemClock()
    raise ValueError(f"unknown clock {kind!r}")


def derive_seed(root: int, *parts: Any) -> int:
    """Stable 31-bit sub-seed from a root seed and any labels."""
    text = ":".join([str(root), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big") & 0x7FFFFFFF


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dumps_line(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"


def append_jsonl(path: Path, record: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps_line(record))
        fh.flush()


def write_jsonl(path: Path, records: Iterable[Any]) -> None:
    """Atomically replace ``path`` with the given records."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_line(r))
    os.replace(tmp, path)


def read_jsonl(path: Path) -> Iterator[dict]:
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_json(path: Path, default: Any = None) -> Any:
    if not path.exists():
        return default
    return json.loads(path.read_text(encoding="utf-8"))


def first_sentence(text: str, limit: int = 240) -> str:
    text = " ".join(text.split())
    for stop in (". ", "? ", "! "):
        k = text.find(stop)
        if 0 < k < limit:
            return text[: k + 1]
    return text if len(text) <= limit else text[: limit - 3].rstrip() + "..."
