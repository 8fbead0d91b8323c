"""Bradley-Terry-Davidson model with a global tie scale and context offsets.

Probabilities use the symmetric form obtained by dividing numerator and
denominator by sqrt(r)::

    pW = e^{d/2} / D,  pD = nu / D,  pL = e^{-d/2} / D,  D = e^{d/2} + e^{-d/2} + nu

which is algebraically identical to r/beta, nu*sqrt(r)/beta, 1/beta and never
overflows for moderate d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .matches import OUTCOME_SCORE, Match, agents_of, as_matches

log = logging.getLogger(__name__)

RIDGE = 1e-4
ETA_BOUNDS = (-20.0, 10.0)
GRAD_TOL = 1e-6


def btd_probs(s_i: float, s_j: float, gamma_c: float = 0.0, nu: float = 1.0) -> tuple[float, float, float]:
    if nu < 0:
        raise ValueError("nu must be >= 0")
    half = 0.5 * (s_i - s_j + gamma_c)
    a, b = np.exp(half), np.exp(-half)
    d = a + b + nu
    return float(a / d), float(nu / d), float(b / d)


def btd_probs_array(delta: np.ndarray, nu: float) -> np.ndarray:
    """(M, 3) array of (pW, pD, pL) for an array of ability differences."""
    half = 0.5 * np.asarray(delta, dtype=float)
    a, b = np.exp(half), np.exp(-half)
    d = a + b + nu
    return np.stack([a / d, np.full_like(d, nu) / d, b / d], axis=1)


def btd_normalized_ability(s) -> np.ndarray | dict:
    """e^s / mean(e^s); accepts a sequence or a mapping agent -> s."""
    if isinstance(s, dict):
        keys = list(s)
        vals = btd_normalized_ability(np.array([s[k] for k in keys]))
        return dict(zip(keys, vals.tolist()))
    s = np.asarray(s, dtype=float)
    e = np.exp(s - s.max())
    return e / e.mean()


@dataclass
class BTDProblem:
    """Match data encoded as index arrays plus the free-parameter layout."""

    agents: list[str]
    contexts: list[str]
    reference: int
    i: np.ndarray
    j: np.ndarray
    c: np.ndarray
    outcome: np.ndarray  # 0=W, 1=D, 2=L
    lam: float = RIDGE

    @property
    def n_free_s(self) -> int:
        return len(self.agents) - 1

    @property
    def n_params(self) -> int:
        return self.n_free_s + len(self.contexts) - 1 + 1

    def unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        n, k = len(self.agents), self.n_free_s
        s = np.zeros(n)
        s[np.arange(n) != self.reference] = theta[:k]
        g = np.zeros(len(self.contexts))
        g[1:] = theta[k:-1]
        return s, g, float(theta[-1])

    def pack(self, s: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
        s = np.asarray(s, float) - s[self.reference]
        return np.concatenate([s[np.arange(len(self.agents)) != self.reference], np.asarray(g, float)[1:], [eta]])

    def delta(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        return s[self.i] - s[self.j] + g[self.c]

    def objective(self, theta: np.ndarray) -> float:
        """Negative penalized log-likelihood."""
        s, g, eta = self.unpack(theta)
        half = 0.5 * self.delta(s, g)
        log_d = np.logaddexp(np.logaddexp(half, -half), eta)
        num = np.where(self.outcome == 0, half, np.where(self.outcome == 1, eta, -half))
        ll = np.sum(num - log_d)
        penalty = 0.5 * self.lam * np.sum(theta[:-1] ** 2)
        return float(-ll + penalty)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        s, g, eta = self.unpack(theta)
        half = 0.5 * self.delta(s, g)
        # divide by e^{|half|} for stability: sinh(h)/D and nu/D
        m = np.abs(half)
        ea, eb, en = np.exp(half - m), np.exp(-half - m), np.exp(eta - m)
        dd = ea + eb + en
        y = np.where(self.outcome == 0, 0.5, np.where(self.outcome == 1, 0.0, -0.5))
        g_delta = y - 0.5 * (ea - eb) / dd
        g_eta = np.sum((self.outcome == 1) - en / dd)
        gs = np.zeros(len(self.agents))
        np.add.at(gs, self.i, g_delta)
        np.add.at(gs, self.j, -g_delta)
        gg = np.zeros(len(self.contexts))
        np.add.at(gg, self.c, g_delta)
        grad_ll = np.concatenate([gs[np.arange(len(self.agents)) != self.reference], gg[1:], [g_eta]])
        pen = np.concatenate([self.lam * theta[:-1], [0.0]])
        return -grad_ll + pen

    def fd_hessian(self, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
        p = len(theta)
        H = np.empty((p, p))
        for k in range(p):
            e = np.zeros(p)
            e[k] = h
            H[:, k] = (self.gradient(theta + e) - self.gradient(theta - e)) / (2 * h)
        return 0.5 * (H + H.T)


@dataclass
class BTDFit:
    agents: list[str]
    contexts: list[str]
    reference: str
    s: dict[str, float]
    gamma: dict[str, float]
    nu: float
    eta: float
    lam: float
    std_errors: dict[str, float]
    neg_loglik: float
    grad_max: float
    converged: bool
    n_matches: int
    components: list[list[str]] = field(default_factory=list)
    message: str = ""

    def probs(self, agent_i: str, agent_j: str, context: str | None = None) -> tuple[float, float, float]:
        g = self.gamma.get(context, 0.0) if context is not None else 0.0
        return btd_probs(self.s[agent_i], self.s[agent_j], g, self.nu)

    def match_probs(self, matches) -> np.ndarray:
        ms = as_matches(matches)
        delta = np.array([self.s[m.agent_i] - self.s[m.agent_j] + self.gamma.get(m.context, 0.0) for m in ms])
        return btd_probs_array(delta, self.nu)

    def normalized_ability(self) -> dict[str, float]:
        return btd_normalized_ability(self.s)

    def as_dict(self) -> dict:
        return {
            "agents": self.agents, "contexts": self.contexts, "reference": self.reference,
            "s": self.s, "gamma": self.gamma, "nu": self.nu, "eta": self.eta, "lambda": self.lam,
            "std_errors": self.std_errors, "neg_loglik": self.neg_loglik, "grad_max": self.grad_max,
            "converged": self.converged, "n_matches": self.n_matches, "components": self.components,
            "btd_nrm": self.normalized_ability(), "message": self.message,
        }


def comparison_components(matches: list[Match], agents: list[str]) -> list[list[str]]:
    """Connected components of the comparison graph, largest first."""
    index = {a: k for k, a in enumerate(agents)}
    rows = [index[m.agent_i] for m in matches]
    cols = [index[m.agent_j] for m in matches]
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(agents), len(agents)))
    n, labels = connected_components(g, directed=False)
    comps = [[a for a, lab in zip(agents, labels) if lab == k] for k in range(n)]
    return sorted(comps, key=lambda c: (-len(c), c))


def build_problem(matches: list[Match], agents: list[str], contexts: list[str], reference: int,
                  lam: float = RIDGE) -> BTDProblem:
    ai = {a: k for k, a in enumerate(agents)}
    ci = {c: k for k, c in enumerate(contexts)}
    code = {"W": 0, "D": 1, "L": 2}
    return BTDProblem(
        agents, contexts, reference,
        np.array([ai[m.agent_i] for m in matches], dtype=int),
        np.array([ai[m.agent_j] for m in matches], dtype=int),
        np.array([ci[m.context] for m in matches], dtype=int),
        np.array([code[m.outcome] for m in matches], dtype=int),
        lam,
    )


def btd_fit(records, lam: float = RIDGE, reference: str | None = None, contexts: list[str] | None = None,
            agents: list[str] | None = None, max_iter: int = 1000, newton_steps: int = 50) -> BTDFit:
    """Penalized maximum likelihood via L-BFGS-B, then Newton polishing on a
    finite-difference Hessian until the gradient max-norm is below 1e-6."""
    matches = as_matches(records)
    if not matches:
        raise ValueError("no matches")
    agents = list(agents) if agents is not None else agents_of(matches)
    comps = comparison_components(matches, agents)
    message = ""
    if len(comps) > 1:
        keep = set(comps[0])
        message = f"comparison graph has {len(comps)} components; fitting the largest ({len(keep)} agents)"
        log.warning(message)
        matches = [m for m in matches if m.agent_i in keep]
        agents = [a for a in agents if a in keep]
    seen = {m.context for m in matches}
    if contexts is None:
        contexts = sorted(seen)
    else:
        contexts = [c for c in contexts if c in seen] + sorted(seen - set(contexts))
    ref_name = reference if reference is not None else agents[-1]
    if ref_name not in agents:
        raise ValueError(f"reference agent {ref_name!r} not among fitted agents")
    prob = build_problem(matches, agents, contexts, agents.index(ref_name), lam)

    x0 = np.zeros(prob.n_params)
    bounds = [(None, None)] * (prob.n_params - 1) + [ETA_BOUNDS]
    res = minimize(prob.objective, x0, jac=prob.gradient, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "gtol": 1e-10, "ftol": 1e-15})
    theta = res.x
    f = prob.objective(theta)
    for _ in range(newton_steps):
        g = prob.gradient(theta)
        if np.max(np.abs(g)) < GRAD_TOL * 1e-2:
            break
        H = prob.fd_hessian(theta)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.pinv(H) @ g
        t = 1.0
        while t > 1e-8:
            cand = theta + t * step
            cand[-1] = np.clip(cand[-1], *ETA_BOUNDS)
            fc = prob.objective(cand)
            if fc <= f + 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        if t <= 1e-8:
            break
        theta, f = cand, fc
    g = prob.gradient(theta)
    grad_max = float(np.max(np.abs(g)))
    H = prob.fd_hessian(theta)
    cov = np.linalg.pinv(H)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    s, gam, eta = prob.unpack(theta)
    names = ([f"s[{a}]" for k, a in enumerate(agents) if k != prob.reference]
             + [f"gamma[{c}]" for c in contexts[1:]] + ["eta"])
    std_errors = dict(zip(names, se.tolist()))
    std_errors["nu"] = float(np.exp(eta) * se[-1])
    on_bound = eta <= ETA_BOUNDS[0] + 1e-9 or eta >= ETA_BOUNDS[1] - 1e-9
    converged = grad_max < GRAD_TOL or (on_bound and np.max(np.abs(g[:-1]), initial=0.0) < GRAD_TOL)
    if not converged:
        message = (message + "; " if message else "") + f"gradient max-norm {grad_max:.2e} above tolerance"
    return BTDFit(
        agents=agents, contexts=contexts, reference=ref_name,
        s=dict(zip(agents, s.tolist())), gamma=dict(zip(contexts, gam.tolist())),
        nu=float(np.exp(eta)), eta=float(eta), lam=lam, std_errors=std_errors, neg_loglik=float(f),
        grad_max=grad_max, converged=bool(converged), n_matches=len(matches), components=comps, message=message,
    )


# -- calibration ------------------------------------------------------------------


@dataclass
class Calibration:
    brier: float
    logloss: float
    reliability: list[dict]

    def as_dict(self) -> dict:
        return {"brier": self.brier, "logloss": self.logloss, "reliability": self.reliability}


def calibration_from_probs(probs: np.ndarray, outcomes, bins: int = 10) -> Calibration:
    """Multiclass Brier and LogLoss averaged per match, plus a reliability curve
    of realized score against predicted expected score pW + pD/2."""
    probs = np.asarray(probs, dtype=float)
    idx = np.array([{"W": 0, "D": 1, "L": 2}[o] for o in outcomes])
    if len(idx) == 0:
        raise ValueError("no matches")
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(idx)), idx] = 1.0
    brier = float(np.mean(np.sum((onehot - probs) ** 2, axis=1)))
    logloss = float(-np.mean(np.log(probs[np.arange(len(idx)), idx])))
    expected = probs[:, 0] + 0.5 * probs[:, 1]
    realized = np.array([OUTCOME_SCORE[o] for o in outcomes])
    which = np.minimum((expected * bins).astype(int), bins - 1)
    curve = []
    for b in range(bins):
        sel = which == b
        if sel.any():
            curve.append({"bin": b, "lo": b / bins, "hi": (b + 1) / bins,
                          "mean_predicted": float(expected[sel].mean()),
                          "empirical": float(realized[sel].mean()), "count": int(sel.sum())})
    return Calibration(brier, logloss, curve)


def calibration(records, fit: BTDFit, bins: int = 10) -> Calibration:
    matches = [m for m in as_matches(records) if m.agent_i in fit.s and m.agent_j in fit.s]
    return calibration_from_probs(fit.match_probs(matches), [m.outcome for m in matches], bins)


def simulate_matches(s: dict[str, float], gamma: dict[str, float], nu: float, n: int,
                     rng: np.random.Generator) -> list[Match]:
    """Draw matches with uniformly random ordered pairs and contexts from the model."""
    agents, contexts = list(s), list(gamma)
    out = []
    for _ in range(n):
        i, j = rng.choice(len(agents), size=2, replace=False)
        c = contexts[int(rng.integers(len(contexts)))]
        p = btd_probs(s[agents[i]], s[agents[j]], gamma[c], nu)
        o = "WDL"[int(rng.choice(3, p=p))]
        out.append(Match(agents[i], agents[j], c, o))
    return out
