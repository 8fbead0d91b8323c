from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matches import OUTCOME_SCORE, Match, agents_of, as_matches

K_FACTOR = 32.0
INITIAL_RATING = 1200.0


def expected_score(ri: float, rj: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((rj - ri) / 400.0))


def elo_update(ri: float, rj: float, outcome: str, k: float = K_FACTOR) -> tuple[float, float]:
    """One online update; the two deltas are exact negatives of each other."""
    delta = k * (OUTCOME_SCORE[outcome] - expected_score(ri, rj))
    return ri + delta, rj - delta


def _play(order, matches: list[Match], index: dict[str, int], k: float, r0: float) -> np.ndarray:
    r = np.full(len(index), r0)
    for t in order:
        m = matches[t]
        i, j = index[m.agent_i], index[m.agent_j]
        r[i], r[j] = elo_update(r[i], r[j], m.outcome, k)
    return r


@dataclass
class EloTable:
    agents: list[str]
    final: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    permutations: int

    def as_dict(self) -> dict:
        return {a: {"final": float(f), "mean": float(m), "std": float(s)}
                for a, f, m, s in zip(self.agents, self.final, self.mean, self.std)}


def elo_run(records, k: float = K_FACTOR, r0: float = INITIAL_RATING, permutations: int = 100, seed: int = 0,
            agents: list[str] | None = None) -> EloTable:
    """Chronological final ratings plus mean/std over seeded random match orders.

    Permutations are drawn over a canonical (sorted) ordering of the matches, so
    the permutation statistics do not depend on the order of the input file.
    """
    matches = as_matches(records)
    if not matches:
        raise ValueError("no matches")
    agents = list(agents) if agents is not None else agents_of(matches)
    index = {a: n for n, a in enumerate(agents)}
    for t, m in enumerate(matches):
        for a in (m.agent_i, m.agent_j):
            if a not in index:
                raise ValueError(f"match {t}: unknown agent {a!r}")
    final = _play(range(len(matches)), matches, index, k, r0)
    canonical = sorted(matches)
    rng = np.random.default_rng(seed)
    runs = np.array([_play(rng.permutation(len(canonical)), canonical, index, k, r0)
                     for _ in range(permutations)]) if permutations else final[None, :]
    return EloTable(agents, final, runs.mean(axis=0), runs.std(axis=0), permutations)
