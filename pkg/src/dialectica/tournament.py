"""Same-persona pairwise tournament between experimental conditions, judged by an LLM."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .common import append_jsonl, derive_seed, read_json, read_jsonl, write_json
from .config import AgentConfig, load_agent_config
from .memory import MemoryStore
from .prompts import JUDGE_REMINDER, judge_prompt, memory_conditioned_prompt, pure_baseline_prompt
from .providers import ChatRequest, HashingEmbedder, chat
from .questions import Question, load_question_bank

log = logging.getLogger(__name__)

OUTCOMES = ("W", "D", "L")
MAX_FAILURE_RATE = 0.10
LEARNING_CONTEXT_K = 5


class VerdictError(ValueError):
    pass


@dataclass(frozen=True)
class Contest:
    id: str
    question_id: str
    persona: str
    side_i: str
    side_j: str
    seed: int

    def __post_init__(self):
        if self.side_i == self.side_j:
            raise ValueError("a contest needs two different conditions")


@dataclass
class MatchRecord:
    contest_id: str
    agent_i: str
    agent_j: str
    context: str
    outcome: str
    order_flip: bool
    judge_reasoning: str
    question_id: str = ""
    persona: str = ""
    response_i: str = ""
    response_j: str = ""

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}")

    def to_dict(self) -> dict:
        return dict(vars(self))

    @classmethod
    def from_dict(cls, d: Mapping) -> "MatchRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


# -- pairings ----------------------------------------------------------------


def generate_pairings(conditions: Iterable[str], personas: Iterable[str], n_contests: int, seed: int,
                      questions: list[Question] | None = None) -> list[Contest]:
    """Seeded contests; condition pairs cycle through shuffled blocks so every
    unordered pair appears once ``n_contests`` reaches the number of pairs."""
    conds = sorted(set(conditions))
    personas = sorted(set(personas))
    if len(conds) < 2:
        raise ValueError("need at least two conditions")
    if not personas:
        raise ValueError("need at least one persona")
    questions = questions or load_question_bank()
    pairs = list(combinations(conds, 2))
    rng = np.random.default_rng(seed)
    out = []
    block: list[tuple[str, str]] = []
    for k in range(n_contests):
        if not block:
            block = [pairs[i] for i in rng.permutation(len(pairs))]
        a, b = block.pop()
        persona = personas[int(rng.integers(len(personas)))]
        q = questions[int(rng.integers(len(questions)))]
        out.append(Contest(f"c{k:05d}", q.id, persona, a, b, derive_seed(seed, "contest", k)))
    return out


# -- judging -------------------------------------------------------------------

_WINNER = re.compile(r"^WINNER:\s*\[?\s*(A|B|X|Y|TIE)\s*\]?\s*$", re.I)
_REASONING = re.compile(r"^REASONING:\s*(\S.*)$", re.I)


def parse_verdict(text: str) -> tuple[str, str]:
    """Strict two-line grammar. Returns (label, reasoning) with label in
    {"first", "second", "tie"}; A/X name the first-presented response."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise VerdictError("verdict needs WINNER and REASONING lines")
    m = _WINNER.match(lines[0].replace("**", ""))
    if not m:
        raise VerdictError(f"bad WINNER line: {lines[0]!r}")
    r = _REASONING.match(lines[1].replace("**", ""))
    if not r:
        raise VerdictError(f"bad REASONING line: {lines[1]!r}")
    label = m.group(1).upper()
    side = "tie" if label == "TIE" else "first" if label in ("A", "X") else "second"
    return side, " ".join([r.group(1), *lines[2:]]).strip()


def draw_order_flip(seed: int) -> bool:
    return bool(np.random.default_rng(seed).random() < 0.5)


def map_outcome(side: str, order_flip: bool) -> str:
    """Outcome for agent i. Without a flip agent i is presented first."""
    if side == "tie":
        return "D"
    i_first = not order_flip
    return "W" if (side == "first") == i_first else "L"


def judge(question: Question, response_i: str, response_j: str, seed: int, provider,
          tags: Mapping[str, object] | None = None) -> tuple[str, bool, str]:
    """Returns (outcome for i, order_flip, reasoning); raises VerdictError after one re-ask."""
    if not response_i.strip() or not response_j.strip():
        raise ValueError("both responses must be nonempty")
    flip = draw_order_flip(seed)
    first, second = (response_j, response_i) if flip else (response_i, response_j)
    prompt = judge_prompt(question, first, second)
    tags = dict(tags or {}, phase="judge")
    last: VerdictError | None = None
    for attempt in range(2):
        text = chat(provider, ChatRequest.from_prompt(prompt + (JUDGE_REMINDER if attempt else ""),
                                                     seed=seed + attempt, temperature=0.0, **tags)).content
        try:
            side, reasoning = parse_verdict(text)
            return map_outcome(side, flip), flip, reasoning
        except VerdictError as exc:
            last = exc
    raise VerdictError(f"malformed verdict after re-ask: {last}")


# -- contestants -------------------------------------------------------------------


@dataclass
class Snapshot:
    label: str
    condition: str
    persona: str
    config: AgentConfig
    path: Path
    memory: MemoryStore | None = None

    @property
    def key(self) -> str:
        return f"{self.label}/{self.persona}/{self.path.name}"


def latest_snapshot_dir(agent_dir: Path) -> Path:
    after = sorted(agent_dir.glob("after-topic-*"))
    if after:
        return after[-1]
    if (agent_dir / "initial").exists():
        return agent_dir / "initial"
    raise FileNotFoundError(f"no snapshots under {agent_dir}")


def load_snapshots(run_dir: str | Path, embedder=None) -> list[Snapshot]:
    """Final snapshot of every persona in one experiment output directory."""
    run_dir = Path(run_dir)
    manifest = read_json(run_dir / "manifest.json")
    if manifest is None:
        raise FileNotFoundError(f"{run_dir} has no manifest.json")
    embedder = embedder or HashingEmbedder()
    out = []
    for agent_dir in sorted((run_dir / "agents" / "snapshots").iterdir()):
        snap = latest_snapshot_dir(agent_dir)
        mem = MemoryStore(snap / "memory", embedder) if (snap / "memory").exists() else None
        out.append(Snapshot(manifest["label"], manifest["condition"], agent_dir.name,
                            load_agent_config(snap / "config.json"), snap, mem))
    return out


def elicitation_mode(snapshot: Snapshot) -> str:
    return "pure_baseline" if snapshot.condition == "baseline" else "memory_conditioned"


def elicitation_prompt(snapshot: Snapshot, question: Question, mode: str | None = None) -> str:
    mode = mode or elicitation_mode(snapshot)
    if mode == "pure_baseline":
        return pure_baseline_prompt(snapshot.config.name, question)
    if mode != "memory_conditioned":
        raise ValueError(f"unknown mode {mode!r}")
    context = []
    if snapshot.memory is not None:
        context = [" ".join(h.note.content.split())[:300]
                   for h in snapshot.memory.retrieve(question.text, LEARNING_CONTEXT_K)]
    return memory_conditioned_prompt(snapshot.config, question, context)


def elicit_response(snapshot: Snapshot, question: Question, provider, seed: int, mode: str | None = None) -> str:
    prompt = elicitation_prompt(snapshot, question, mode)
    req = ChatRequest.from_prompt(prompt, seed=seed, phase="tournament", condition=snapshot.label,
                                  persona=snapshot.persona, question=question.id)
    return chat(provider, req).content


# -- tournament loop -----------------------------------------------------------------


@dataclass
class TournamentResult:
    matches: list[MatchRecord]
    invalid: int
    skipped: int
    total: int
    elicitations: int = 0
    rejections: list[dict] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return (self.invalid + self.skipped) / self.total if self.total else 0.0

    @property
    def exit_code(self) -> int:
        return 3 if self.failure_rate > MAX_FAILURE_RATE else 0


class ResponseCache:
    """Responses keyed by (snapshot, question), persisted so each is generated once."""

    def __init__(self, path: Path | None):
        self.path = path
        self.data = {r["key"]: r["response"] for r in read_jsonl(path)} if path else {}

    def get_or_make(self, key: str, make) -> tuple[str, bool]:
        if key in self.data:
            return self.data[key], False
        value = make()
        self.data[key] = value
        if self.path is not None:
            append_jsonl(self.path, {"key": key, "response": value})
        return value, True


def run_tournament(snapshots: Iterable[Snapshot], contests: list[Contest], contestant_chat, judge_chat,
                   out_path: str | Path, *, resume: bool = False, seed: int = 0) -> TournamentResult:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rejections_path = out_path.with_name("rejections.jsonl")
    cache_path = out_path.with_name("responses.jsonl")
    done: set[str] = set()
    matches: list[MatchRecord] = []
    rejections: list[dict] = []
    if resume:
        matches = [MatchRecord.from_dict(r) for r in read_jsonl(out_path)]
        rejections = list(read_jsonl(rejections_path))
        done = {m.contest_id for m in matches} | {r["contest_id"] for r in rejections}
    else:
        for p in (out_path, rejections_path, cache_path):
            if p.exists():
                p.unlink()
    by_key = {(s.label, s.persona): s for s in snapshots}
    questions = {q.id: q for q in load_question_bank()}
    cache = ResponseCache(cache_path)
    made = 0
    invalid = sum(r["reason"] == "invalid_verdict" for r in rejections)
    skipped = len(rejections) - invalid
    for c in contests:
        if c.id in done:
            continue
        q = questions[c.question_id]
        try:
            si, sj = by_key[(c.side_i, c.persona)], by_key[(c.side_j, c.persona)]
            responses = []
            for s in (si, sj):
                text, new = cache.get_or_make(
                    f"{s.key}|{q.id}",
                    lambda s=s: elicit_response(s, q, contestant_chat, derive_seed(seed, s.key, q.id)))
                made += new
                responses.append(text)
        except Exception as exc:
            skipped += 1
            rec = {"contest_id": c.id, "reason": "elicitation_failed", "error": str(exc)}
            rejections.append(rec)
            append_jsonl(rejections_path, rec)
            continue
        try:
            outcome, flip, reasoning = judge(q, responses[0], responses[1], c.seed, judge_chat,
                                             tags={"contest": c.id})
        except Exception as exc:
            invalid += 1
            rec = {"contest_id": c.id, "reason": "invalid_verdict", "error": str(exc)}
            rejections.append(rec)
            append_jsonl(rejections_path, rec)
            continue
        m = MatchRecord(c.id, c.side_i, c.side_j, q.category, outcome, flip, reasoning, q.id, c.persona,
                        responses[0], responses[1])
        matches.append(m)
        append_jsonl(out_path, m.to_dict())
    result = TournamentResult(matches, invalid, skipped, len(contests), made, rejections)
    write_json(out_path.with_name("tournament_report.json"), {
        "contests": len(contests), "valid": len(matches), "invalid_verdicts": invalid,
        "elicitation_failures": skipped, "failure_rate": result.failure_rate,
        "elicitations_this_run": made, "exit_code": result.exit_code})
    return result


def load_matches(path: str | Path) -> list[MatchRecord]:
    return [MatchRecord.from_dict(r) for r in read_jsonl(Path(path))]
