from __future__ import annotations

from typing import Iterable, NamedTuple

OUTCOME_SCORE = {"W": 1.0, "D": 0.5, "L": 0.0}


class Match(NamedTuple):
    agent_i: str
    agent_j: str
    context: str
    outcome: str


def as_matches(records: Iterable) -> list[Match]:
    """Accept Match tuples, (i, j, outcome) / (i, j, context, outcome) tuples,
    dicts or objects with ``agent_i``/``agent_j``/``context``/``outcome``."""
    out = []
    for k, r in enumerate(records):
        if isinstance(r, Match):
            m = r
        elif isinstance(r, dict):
            m = Match(r["agent_i"], r["agent_j"], r.get("context", ""), r["outcome"])
        elif isinstance(r, tuple):
            m = Match(r[0], r[1], "", r[2]) if len(r) == 3 else Match(*r)
        else:
            m = Match(r.agent_i, r.agent_j, getattr(r, "context", ""), r.outcome)
        if m.outcome not in OUTCOME_SCORE:
            raise ValueError(f"match {k}: outcome must be W, D or L, got {m.outcome!r}")
        if m.agent_i == m.agent_j:
            raise ValueError(f"match {k}: an agent cannot play itself")
        out.append(m)
    return out


def agents_of(matches: Iterable[Match]) -> list[str]:
    return sorted({a for m in matches for a in (m.agent_i, m.agent_j)})
