"""Dual-tier agent memory: notes with importance-weighted semantic retrieval,
an opponent-claim ledger, a rotating reflection log and a learning log.

On disk (one directory per agent)::

    session.jsonl, persistent.jsonl      append-only note records
    reflections.jsonl                    active reflection window
    reflections-<usec>.jsonl             archived reflections, never deleted
    opponents.jsonl                      opponent claims
    learning_log.txt                     human-readable learning events
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .common import SystemClock, append_jsonl, read_jsonl, write_jsonl
from .reflection import ReflectionRecord

log = logging.getLogger(__name__)

TIERS = ("session", "persistent")
IMPORTANCE_WEIGHTS = {"high": 1.0, "medium": 0.6, "low": 0.3}
RELEVANCE_WEIGHT = 0.6
IMPORTANCE_WEIGHT = 0.4
RECENCY_WEIGHT = 0.0
RELEVANCE_FLOOR = 0.2
REFLECTION_WINDOW = 100


@dataclass(frozen=True)
class MemoryNote:
    id: str
    tier: str
    content: str
    importance: str
    timestamp: float
    tags: tuple[str, ...] = ()
    embedding: np.ndarray | None = None

    @property
    def weight(self) -> float:
        return IMPORTANCE_WEIGHTS[self.importance]

    @property
    def deferred(self) -> bool:
        return self.embedding is None


@dataclass(frozen=True)
class OpponentClaim:
    opponent_id: str
    claim: str
    round: int
    timestamp: float
    topic: str = ""

    def __post_init__(self):
        if not self.opponent_id:
            raise ValueError("opponent_id must be nonempty")


@dataclass(frozen=True)
class RetrievalResult:
    note: MemoryNote
    relevance: float
    score: float


def recency_score(age: float, half_life: float = 86400.0) -> float:
    """Exponential decay in [0, 1]; carried with weight 0 by default."""
    return math.exp(-max(age, 0.0) / half_life * math.log(2))


def score_note(query_embedding: np.ndarray, note: MemoryNote, *, now: float | None = None,
               recency_weight: float = RECENCY_WEIGHT, half_life: float = 86400.0) -> float:
    relevance = float(np.dot(query_embedding, note.embedding))
    score = RELEVANCE_WEIGHT * relevance + IMPORTANCE_WEIGHT * note.weight
    if recency_weight:
        score += recency_weight * recency_score((now or note.timestamp) - note.timestamp, half_life)
    return score


class MemoryStore:
    def __init__(self, root: str | Path, embedder, clock=None, *, relevance_floor: float = RELEVANCE_FLOOR,
                 recency_weight: float = RECENCY_WEIGHT, window: int = REFLECTION_WINDOW):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.embedder = embedder
        self.clock = clock or SystemClock()
        self.relevance_floor = relevance_floor
        self.recency_weight = recency_weight
        self.window = window
        self._notes: dict[str, MemoryNote] = {}
        self._claims: list[OpponentClaim] = []
        self._archive_path: Path | None = None
        self._load()

    # -- persistence ------------------------------------------------------

    def _tier_path(self, tier: str) -> Path:
        return self.root / f"{tier}.jsonl"

    @property
    def reflections_path(self) -> Path:
        return self.root / "reflections.jsonl"

    @property
    def learning_log_path(self) -> Path:
        return self.root / "learning_log.txt"

    def _load(self) -> None:
        for tier in TIERS:
            for rec in read_jsonl(self._tier_path(tier)):
                emb = None if rec.get("embedding") is None else np.asarray(rec["embedding"], dtype=float)
                if rec.get("op") == "embed":
                    old = self._notes[rec["id"]]
                    self._notes[rec["id"]] = _replace_embedding(old, emb)
                    continue
                self._notes[rec["id"]] = MemoryNote(rec["id"], tier, rec["content"], rec["importance"],
                                                    rec["timestamp"], tuple(rec["tags"]), emb)
        for rec in read_jsonl(self.root / "opponents.jsonl"):
            self._claims.append(OpponentClaim(rec["opponent_id"], rec["claim"], rec["round"],
                                              rec["timestamp"], rec.get("topic", "")))

    # -- notes ------------------------------------------------------------

    @property
    def notes(self) -> list[MemoryNote]:
        return list(self._notes.values())

    def get(self, note_id: str) -> MemoryNote:
        return self._notes[note_id]

    def save_note(self, tier: str, content: str, importance: str = "medium", tags: Iterable[str] = ()) -> str:
        if tier not in TIERS:
            raise ValueError(f"tier must be one of {TIERS}")
        if importance not in IMPORTANCE_WEIGHTS:
            raise ValueError(f"importance must be one of {tuple(IMPORTANCE_WEIGHTS)}")
        if not content or not content.strip():
            raise ValueError("note content must be nonempty")
        note_id = f"n{len(self._notes) + 1:06d}"
        try:
            emb = self.embedder.embed(content)
        except Exception as exc:
            log.warning("embedding failed for note %s (%s); deferring", note_id, exc)
            emb = None
        note = MemoryNote(note_id, tier, content, importance, self.clock.now(), tuple(tags), emb)
        self._notes[note_id] = note
        append_jsonl(self._tier_path(tier), {
            "id": note_id, "content": content, "importance": importance, "timestamp": note.timestamp,
            "tags": list(note.tags), "embedding": None if emb is None else emb.tolist(),
        })
        return note_id

    def embed_pending(self) -> int:
        """Retry embedding for deferred notes; returns how many succeeded."""
        done = 0
        for note in [n for n in self._notes.values() if n.deferred]:
            try:
                emb = self.embedder.embed(note.content)
            except Exception:
                continue
            self._notes[note.id] = _replace_embedding(note, emb)
            append_jsonl(self._tier_path(note.tier), {"op": "embed", "id": note.id, "embedding": emb.tolist()})
            done += 1
        return done

    def retrieve(self, query: str, k: int = 5, tiers: Iterable[str] = TIERS,
                 tag: str | None = None, exclude_tags: Iterable[str] = ()) -> list[RetrievalResult]:
        if k < 1:
            raise ValueError("k must be >= 1")
        tiers, exclude = set(tiers), set(exclude_tags)
        pool = [n for n in self._notes.values()
                if n.tier in tiers and not n.deferred and (tag is None or tag in n.tags)
                and not exclude.intersection(n.tags)]
        if not pool:
            return []
        q = self.embedder.embed(query)
        relevance = np.stack([n.embedding for n in pool]) @ q
        now = self.clock.now() if self.recency_weight else None
        results = []
        for note, rel in zip(pool, relevance):
            rel = float(rel)
            if rel < self.relevance_floor:
                continue
            score = RELEVANCE_WEIGHT * rel + IMPORTANCE_WEIGHT * note.weight
            if self.recency_weight:
                score += self.recency_weight * recency_score(now - note.timestamp)
            results.append(RetrievalResult(note, rel, score))
        results.sort(key=lambda r: (-r.score, -r.note.timestamp, r.note.id))
        return results[:k]

    # -- reflection log ---------------------------------------------------

    def active_reflections(self) -> list[ReflectionRecord]:
        return [ReflectionRecord.from_dict(r) for r in read_jsonl(self.reflections_path)]

    def archived_reflections(self) -> list[ReflectionRecord]:
        out = []
        for path in sorted(self.root.glob("reflections-*.jsonl")):
            out.extend(ReflectionRecord.from_dict(r) for r in read_jsonl(path))
        return out

    def all_reflections(self) -> list[ReflectionRecord]:
        return self.archived_reflections() + self.active_reflections()

    def append_reflection_log(self, record: ReflectionRecord) -> None:
        active = [r for r in read_jsonl(self.reflections_path)]
        active.append(record.to_dict())
        overflow = len(active) - self.window
        if overflow > 0:
            if self._archive_path is None:
                stamp = int(round(self.clock.now() * 1e6))
                self._archive_path = self.root / f"reflections-{stamp:020d}.jsonl"
            for rec in active[:overflow]:
                append_jsonl(self._archive_path, rec)
            active = active[overflow:]
        write_jsonl(self.reflections_path, active)

    # -- opponents --------------------------------------------------------

    def track_opponent_claim(self, opponent_id: str, claim: str, round: int, topic: str = "") -> OpponentClaim:
        c = OpponentClaim(opponent_id, claim, int(round), self.clock.now(), topic)
        self._claims.append(c)
        append_jsonl(self.root / "opponents.jsonl", {
            "opponent_id": c.opponent_id, "claim": c.claim, "round": c.round,
            "timestamp": c.timestamp, "topic": c.topic,
        })
        return c

    def recent_opponent_claims(self, limit: int = 10, *, topic: str | None = None,
                               before_round: int | None = None) -> list[OpponentClaim]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        out = []
        for c in reversed(self._claims):
            if topic is not None and c.topic != topic:
                continue
            if before_round is not None and c.round >= before_round:
                continue
            out.append(c)
            if len(out) == limit:
                break
        return out

    # -- learning log -----------------------------------------------------

    def log_learning(self, line: str) -> None:
        with open(self.learning_log_path, "a", encoding="utf-8") as fh:
            fh.write(f"[{self.clock.now():.3f}] {line.strip()}\n")


def _replace_embedding(note: MemoryNote, emb: np.ndarray | None) -> MemoryNote:
    return MemoryNote(note.id, note.tier, note.content, note.importance, note.timestamp, note.tags, emb)
