"""Payoff matrix, AlphaRank over pure profiles, plateau selection, best-reply
graph components and a match bootstrap."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from .matches import Match, agents_of, as_matches

KAPPA = 1.0
TAU_TV = 1e-3
WINDOW = 3
EPSILON = 0.02
DENSE_LIMIT = 400
# Acceptance probabilities below this are floored so GTH never divides by a
# subnormal; the effect on pi is far below the 1e-10 residual tolerance.
ACCEPT_FLOOR = 1e-200


def default_alpha_grid() -> np.ndarray:
    return np.logspace(-2, 3, 40)


@dataclass
class PayoffMatrix:
    agents: list[str]
    values: np.ndarray
    counts: np.ndarray
    kappa: float = KAPPA

    def as_dict(self) -> dict:
        return {"agents": self.agents, "values": self.values.tolist(), "counts": self.counts.tolist(),
                "kappa": self.kappa}


def payoff_matrix(records, agents: list[str] | None = None, kappa: float = KAPPA) -> PayoffMatrix:
    """A[i, j] = (wins_ij + draws_ij / 2 + kappa / 2) / (N_ij + kappa); 0.5 when N_ij = 0."""
    matches = as_matches(records)
    agents = list(agents) if agents is not None else agents_of(matches)
    idx = {a: k for k, a in enumerate(agents)}
    n = len(agents)
    points = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=int)
    for m in matches:
        i, j = idx[m.agent_i], idx[m.agent_j]
        counts[i, j] += 1
        counts[j, i] += 1
        if m.outcome == "W":
            points[i, j] += 1.0
        elif m.outcome == "L":
            points[j, i] += 1.0
        else:
            points[i, j] += 0.5
            points[j, i] += 0.5
    denom = counts + kappa
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(denom > 0, (points + 0.5 * kappa) / np.where(denom > 0, denom, 1), 0.5)
    np.fill_diagonal(values, 0.5)
    return PayoffMatrix(agents, values, counts, kappa)


def _values(payoff) -> np.ndarray:
    return payoff.values if isinstance(payoff, PayoffMatrix) else np.asarray(payoff, dtype=float)


def transition_matrix(payoff, alpha: float) -> np.ndarray:
    """Row-stochastic matrix over profiles (i, j), state index i * n + j.

    Each of the 2(n-1) single-coordinate deviations is proposed with probability
    1 / (2(n-1)) and accepted with probability logistic(alpha * gain); the
    remaining mass stays on the profile.
    """
    A = _values(payoff)
    n = A.shape[0]
    if n < 2:
        raise ValueError("need at least two agents")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    N = n * n
    P = np.zeros((N, N))
    eta = 1.0 / (2 * (n - 1))

    def accept(delta):
        return eta * max(float(expit(alpha * delta)), ACCEPT_FLOOR)

    for i in range(n):
        for j in range(n):
            s = i * n + j
            for k in range(n):
                if k != i:
                    P[s, k * n + j] = accept(A[k, j] - A[i, j])
                if k != j:
                    P[s, i * n + k] += accept(A[i, j] - A[i, k])
            P[s, s] = 0.0
            P[s, s] = 1.0 - P[s].sum()
    return P


def stationary_distribution(P: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution by GTH state reduction (dense) or power iteration."""
    N = P.shape[0]
    if np.array_equal(P, P.T):
        # symmetric stochastic matrices are doubly stochastic: uniform is exact
        return np.full(N, 1.0 / N)
    if N <= DENSE_LIMIT:
        return _gth(P)
    pi = np.full(N, 1.0 / N)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi


def _gth(P: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination: subtraction-free, so probabilities keep
    full relative accuracy even when transition weights span many orders of magnitude."""
    A = np.array(P, dtype=float)
    N = A.shape[0]
    for k in range(N - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise ValueError("chain is reducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(N)
    pi[0] = 1.0
    for k in range(1, N):
        pi[k] = pi[:k] @ A[:k, k]
        top = pi[: k + 1].max()
        if top > 1e100:
            pi[: k + 1] /= top
    return pi / pi.sum()


def profile_masses(pi: np.ndarray, n: int) -> np.ndarray:
    if np.all(pi == pi[0]):
        # uniform pi: every agent's mass is exactly 1/n; summation would cost an ulp
        return np.full(n, 1.0 / n)
    M = pi.reshape(n, n)
    return 0.5 * M.sum(axis=1) + 0.5 * M.sum(axis=0)


@dataclass
class AlphaRankPoint:
    alpha: float
    pi: np.ndarray
    masses: np.ndarray
    residual: float


def alpharank_at_alpha(payoff, alpha: float) -> AlphaRankPoint:
    A = _values(payoff)
    n = A.shape[0]
    P = transition_matrix(A, alpha)
    pi = stationary_distribution(P)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(pi @ P - pi).sum())
    return AlphaRankPoint(float(alpha), pi, profile_masses(pi, n), residual)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class AlphaRankResult:
    agents: list[str]
    alpha_grid: np.ndarray
    masses: np.ndarray  # (len(grid), n)
    residuals: np.ndarray
    tv: np.ndarray  # TV between consecutive grid points
    plateau_index: int
    plateau_found: bool
    mccs: list[list[str]] = field(default_factory=list)
    bands: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def plateau_alpha(self) -> float:
        return float(self.alpha_grid[self.plateau_index])

    @property
    def plateau_masses(self) -> dict[str, float]:
        return dict(zip(self.agents, self.masses[self.plateau_index].tolist()))

    def as_dict(self) -> dict:
        return {
            "agents": self.agents, "alpha_grid": self.alpha_grid.tolist(), "masses": self.masses.tolist(),
            "residuals": self.residuals.tolist(), "tv": self.tv.tolist(), "plateau_alpha": self.plateau_alpha,
            "plateau_found": self.plateau_found, "plateau_masses": self.plateau_masses, "mccs": self.mccs,
            "bootstrap_bands": {k: list(v) for k, v in self.bands.items()},
        }


def select_plateau(tv: np.ndarray, tau: float = TAU_TV, window: int = WINDOW) -> tuple[int, bool]:
    """Start of the stable tail of the grid: the smallest k >= window such that every
    consecutive TV from grid point k - window to the end is below tau (tv[m]
    compares grid points m and m + 1). Requiring the whole tail, not just one
    window, keeps the near-uniform regime at tiny alpha from counting as a
    plateau. Falls back to the last grid point when the tail never settles."""
    tv = np.asarray(tv)
    m = len(tv)
    while m > 0 and tv[m - 1] < tau:
        m -= 1
    if len(tv) - m < window:
        return len(tv), False
    return max(m + window, window), True


def alpha_sweep(payoff, grid=None, tau: float = TAU_TV, window: int = WINDOW,
                agents: list[str] | None = None) -> AlphaRankResult:
    grid = default_alpha_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("alpha grid must be strictly increasing")
    if len(grid) < window + 1:
        raise ValueError("alpha grid needs at least window + 1 points")
    A = _values(payoff)
    if agents is None:
        agents = payoff.agents if isinstance(payoff, PayoffMatrix) else [str(k) for k in range(A.shape[0])]
    points = [alpharank_at_alpha(A, a) for a in grid]
    tv = np.array([total_variation(points[k].pi, points[k + 1].pi) for k in range(len(points) - 1)])
    k, found = select_plateau(tv, tau, window)
    return AlphaRankResult(list(agents), grid, np.array([p.masses for p in points]),
                           np.array([p.residual for p in points]), tv, k, found)


def best_reply_graph(payoff, epsilon: float = EPSILON) -> np.ndarray:
    """Adjacency: edge i -> j (j != i) if A[j, i] >= max_k A[k, i] - epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    A = _values(payoff)
    best = A.max(axis=0)
    adj = A.T >= best[:, None] - epsilon
    np.fill_diagonal(adj, False)
    return adj


def mcc_analysis(payoff, epsilon: float = EPSILON, agents: list[str] | None = None) -> list[list]:
    """Terminal strongly connected components of the epsilon-best-reply graph."""
    A = _values(payoff)
    if agents is None:
        agents = payoff.agents if isinstance(payoff, PayoffMatrix) else list(range(A.shape[0]))
    adj = best_reply_graph(A, epsilon)
    n_comp, labels = connected_components(csr_matrix(adj.astype(float)), directed=True, connection="strong")
    out = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        leaves = adj[members][:, labels != c].any()
        if not leaves:
            out.append(sorted(agents[k] for k in members))
    return sorted(out)


def bootstrap_masses(records, B: int, alpha: float, seed: int = 0, kappa: float = KAPPA,
                     agents: list[str] | None = None, index_sets=None) -> dict:
    """Percentile bands (2.5, 97.5) of AlphaRank masses over match resamples."""
    if B < 1:
        raise ValueError("B must be >= 1")
    matches = as_matches(records)
    agents = list(agents) if agents is not None else agents_of(matches)
    rng = np.random.default_rng(seed)
    reps = []
    for b in range(B):
        idx = np.asarray(index_sets[b]) if index_sets is not None else rng.integers(len(matches), size=len(matches))
        sample = [matches[k] for k in idx]
        reps.append(alpharank_at_alpha(payoff_matrix(sample, agents, kappa), alpha).masses)
    reps = np.array(reps)
    lo, hi = np.percentile(reps, [2.5, 97.5], axis=0)
    return {"agents": agents, "lo": lo, "hi": hi, "replicates": reps,
            "bands": {a: (float(l), float(h)) for a, l, h in zip(agents, lo, hi)}}
