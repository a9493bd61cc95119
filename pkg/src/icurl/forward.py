"""Forward CURL: maximize a concave utility over the occupancy polytope.

Frank-Wolfe is natural here because its linear oracle, argmax_d <d, grad F(d_k)>,
is an ordinary MDP solve. At any iterate the Frank-Wolfe gap coincides with the
exploitability of the iterate in the induced mean-field game, so a converged run
is a mean-field Nash equilibrium.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp import (
    TabularMdp,
    best_response_value,
    is_occupancy,
    occupancy_from_policy,
    policy_from_occupancy,
    solve_mdp,
)
from .utilities import ConcaveUtility, InfeasiblePointError

log = logging.getLogger(__name__)

STEP_RULES = ("open_loop", "line_search", "pairwise")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    utility_value: float
    fw_gap: float
    exploitability: float


@dataclass
class CurlSolution:
    occupancy: np.ndarray
    policy: np.ndarray
    utility_value: float
    exploitability: float
    iterations: int
    converged: bool
    trace: list[TraceRow] = field(default_factory=list)


def exploitability(
    mdp: TabularMdp,
    d_pop,
    reward_at: Callable[[np.ndarray], np.ndarray],
    d_eval=None,
    tol: float = 1e-8,
) -> float:
    """Best-response value against the frozen reward ``reward_at(d_pop)`` minus
    the value of ``d_eval`` (defaults to ``d_pop``)."""
    d_pop = np.asarray(d_pop, dtype=float)
    d_eval = d_pop if d_eval is None else np.asarray(d_eval, dtype=float)
    r = reward_at(d_pop)
    if not np.all(np.isfinite(r)):
        raise ValueError("mean-field reward has non-finite entries")
    return best_response_value(mdp, r, tol) - float(np.sum(d_eval * r))


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full(mdp.shape, 1.0 / mdp.num_actions)


def _safe_value(u: ConcaveUtility, d) -> float:
    try:
        return u.value(d)
    except InfeasiblePointError:
        return -np.inf


def _directional_slope(u: ConcaveUtility, d, direction) -> float:
    try:
        return float(np.sum(u.gradient(d) * direction))
    except InfeasiblePointError:
        return -np.inf


def line_search(u: ConcaveUtility, d, direction, t_max: float, iters: int = 100) -> float:
    """Maximize the concave map t -> F(d + t * direction) on [0, t_max].

    Bisection on the directional derivative, which is nonincreasing in t.
    """
    if _directional_slope(u, d + t_max * direction, direction) >= 0:
        return t_max
    if _directional_slope(u, d, direction) <= 0:
        return 0.0
    lo, hi = 0.0, t_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _directional_slope(u, d + mid * direction, direction) > 0:
            lo = mid
        else:
            hi = mid
    return lo


class _ActiveSet:
    """Convex-combination weights over oracle vertices, stored row-wise."""

    def __init__(self, first: np.ndarray):
        self.shape = first.shape
        self.keys: list = ["init"]
        self.atoms = np.zeros((16, first.size))
        self.atoms[0] = first.ravel()
        self.weights = np.zeros(16)
        self.weights[0] = 1.0
        self.index = {"init": 0}

    def _slot(self, key, atom) -> int:
        if key in self.index:
            return self.index[key]
        n = len(self.keys)
        if n == len(self.weights):
            self.atoms = np.vstack([self.atoms, np.zeros_like(self.atoms)])
            self.weights = np.concatenate([self.weights, np.zeros_like(self.weights)])
        self.atoms[n] = atom.ravel()
        self.keys.append(key)
        self.index[key] = n
        return n

    def away(self, grad) -> int:
        """Active atom with the worst linear score."""
        n = len(self.keys)
        scores = self.atoms[:n] @ grad.ravel()
        scores[self.weights[:n] <= 0] = np.inf
        return int(np.argmin(scores))

    def atom(self, i) -> np.ndarray:
        return self.atoms[i].reshape(self.shape)

    def pairwise(self, key, atom, away: int, t: float) -> None:
        i = self._slot(key, atom)
        self.weights[i] += t
        self.weights[away] = max(self.weights[away] - t, 0.0)

    def toward(self, key, atom, alpha: float) -> None:
        self.weights *= 1 - alpha
        self.weights[self._slot(key, atom)] += alpha

    def point(self) -> np.ndarray:
        n = len(self.keys)
        w = self.weights[:n]
        return (w @ self.atoms[:n] / w.sum()).reshape(self.shape)


class _Oracle:
    """Linear maximization over the occupancy polytope, warm-started across calls."""

    def __init__(self, mdp: TabularMdp, tol: float):
        self.mdp = mdp
        self.tol = tol
        self._v = None

    def __call__(self, reward):
        pi, values, d = solve_mdp(self.mdp, reward, self.tol, v0=self._v)
        self._v = values.v
        return pi, d


def solve_curl_frank_wolfe(
    mdp: TabularMdp,
    u: ConcaveUtility,
    max_iters: int = 1000,
    tol: float = 1e-6,
    step: str = "open_loop",
    oracle_tol: float | None = None,
) -> CurlSolution:
    """Frank-Wolfe over the occupancy polytope, started at the uniform policy.

    ``step`` selects the update:

    * ``open_loop``: step 2/(k+2); if that step would lower F, the step is
      shortened by line search on [0, 2/(k+2)] so the utility trace stays monotone.
    * ``line_search``: exact line search on the full segment.
    * ``pairwise``: pairwise Frank-Wolfe over the active set of visited oracle
      vertices, with exact line search. Much faster on curved utilities.

    Stops once the Frank-Wolfe gap is at most ``tol`` or after ``max_iters`` steps.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if step not in STEP_RULES:
        raise ValueError(f"unknown step rule {step!r}; expected one of {STEP_RULES}")
    oracle = _Oracle(mdp, tol / 10 if oracle_tol is None else oracle_tol)

    d = occupancy_from_policy(mdp, uniform_policy(mdp))
    active = _ActiveSet(d)
    trace: list[TraceRow] = []
    value = _safe_value(u, d)
    converged = False
    k = 0
    while True:
        grad = u.gradient(d)
        pi_hat, d_hat = oracle(grad)
        gap = float(np.sum((d_hat - d) * grad))
        trace.append(TraceRow(k, value, gap, gap))
        if gap <= tol:
            converged = True
            break
        if k >= max_iters:
            break

        key = tuple(np.argmax(pi_hat, axis=1).tolist())
        away = active.away(grad) if step == "pairwise" else None
        if away is not None and active.keys[away] != key:
            direction = d_hat - active.atom(away)
            t_max = active.weights[away]
            t = line_search(u, d, direction, t_max)
            active.pairwise(key, d_hat, away, t_max if t >= t_max else t)
            d_new = active.point()
        else:
            direction = d_hat - d
            alpha = 2.0 / (k + 2)
            if step != "open_loop":
                alpha = line_search(u, d, direction, 1.0)
            elif _safe_value(u, d + alpha * direction) < value:
                alpha = line_search(u, d, direction, alpha)
            d_new = d + alpha * direction
            if step == "pairwise":
                active.toward(key, d_hat, alpha)

        d, value = d_new, _safe_value(u, d_new)
        k += 1

    if not converged:
        log.info("Frank-Wolfe stopped after %d iterations with gap %.3e", k, gap)
    return CurlSolution(
        occupancy=d,
        policy=policy_from_occupancy(d),
        utility_value=value,
        exploitability=gap,
        iterations=k,
        converged=converged,
        trace=trace,
    )


def verify_mfne(mdp: TabularMdp, u: ConcaveUtility, sol: CurlSolution, tol: float) -> bool:
    phi = exploitability(mdp, sol.occupancy, u.gradient, sol.occupancy, tol)
    return phi <= 2 * tol


def in_polytope(mdp: TabularMdp, sol: CurlSolution, atol: float = 1e-8) -> bool:
    return is_occupancy(mdp, sol.occupancy, atol)
