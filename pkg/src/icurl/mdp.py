"""Tabular MDPs, occupancy measures, policy evaluation and value iteration.

Arrays follow one layout throughout the package:

* transition ``T[s, a, s']``
* policies ``pi[s, a]``
* rewards and occupancy measures ``x[s, a]``

Occupancy measures are normalized, ``d = (1 - gamma) * sum_t gamma^t Pr(s_t, a_t)``,
so ``<d, r> = (1 - gamma) * E[return]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_ATOL = 1e-12
OCC_ATOL = 1e-9
# relative slack used when breaking ties in greedy action selection
TIE_RTOL = 1e-12


class MdpError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    mu0: np.ndarray
    gamma: float
    prob_atol: float = field(default=PROB_ATOL, repr=False)

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        mu0 = np.array(self.mu0, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise MdpError(f"transition must have shape (S, A, S), got {T.shape}")
        if T.shape[0] < 1 or T.shape[1] < 1:
            raise MdpError("need at least one state and one action")
        if mu0.shape != (T.shape[0],):
            raise MdpError(f"mu0 must have shape ({T.shape[0]},), got {mu0.shape}")
        if not np.all(np.isfinite(T)) or np.any(T < 0):
            raise MdpError("transition probabilities must be finite and nonnegative")
        if np.max(np.abs(T.sum(axis=2) - 1.0)) > self.prob_atol:
            raise MdpError("transition rows must sum to 1")
        if not np.all(np.isfinite(mu0)) or np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > self.prob_atol:
            raise MdpError("mu0 must be a probability vector")
        if not 0.0 < float(self.gamma) < 1.0:
            raise MdpError(f"gamma must lie in (0, 1), got {self.gamma}")
        T.setflags(write=False)
        mu0.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.transition.shape[:2]


@dataclass(frozen=True)
class ValueFunctions:
    v: np.ndarray
    q: np.ndarray

    @property
    def advantage(self) -> np.ndarray:
        return self.q - self.v[:, None]


def _check_table(mdp: TabularMdp, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != mdp.shape:
        raise MdpError(f"{name} must have shape {mdp.shape}, got {x.shape}")
    return x


def check_policy(mdp: TabularMdp, policy, atol: float = PROB_ATOL) -> np.ndarray:
    pi = _check_table(mdp, policy, "policy")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > atol:
        raise MdpError("policy rows must be probability vectors")
    return pi


def check_reward(mdp: TabularMdp, reward) -> np.ndarray:
    r = _check_table(mdp, reward, "reward")
    if not np.all(np.isfinite(r)):
        raise MdpError("reward entries must be finite")
    return r


def flow_residual(mdp: TabularMdp, d) -> float:
    """Largest violation of the Bellman flow constraints defining the occupancy polytope."""
    d = _check_table(mdp, d, "occupancy")
    inflow = (1 - mdp.gamma) * mdp.mu0 + mdp.gamma * np.einsum("sat,sa->t", mdp.transition, d)
    return float(np.max(np.abs(d.sum(axis=1) - inflow)))


def is_occupancy(mdp: TabularMdp, d, atol: float = OCC_ATOL) -> bool:
    d = _check_table(mdp, d, "occupancy")
    return bool(
        np.all(d >= -atol) and abs(d.sum() - 1.0) <= atol and flow_residual(mdp, d) <= atol
    )


def state_transition(mdp: TabularMdp, policy) -> np.ndarray:
    """P_pi[s, s'] = sum_a pi(a|s) T[s, a, s']."""
    return np.einsum("sa,sat->st", policy, mdp.transition)


def occupancy_from_policy(mdp: TabularMdp, policy) -> np.ndarray:
    pi = check_policy(mdp, policy)
    P = state_transition(mdp, pi)
    A = np.eye(mdp.num_states) - mdp.gamma * P.T
    mu = np.linalg.solve(A, (1 - mdp.gamma) * mdp.mu0)
    # the solve is exact up to rounding; tiny negatives come from cancellation
    mu = np.clip(mu, 0.0, None)
    return mu[:, None] * pi


def policy_from_occupancy(d) -> np.ndarray:
    """Conditional pi(a|s) = d(s,a) / d(s); states with no mass get the uniform policy."""
    d = np.clip(np.asarray(d, dtype=float), 0.0, None)
    if d.ndim != 2:
        raise MdpError(f"occupancy must be a 2-d (S, A) array, got shape {d.shape}")
    marginal = d.sum(axis=1, keepdims=True)
    uniform = np.full_like(d, 1.0 / d.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        pi = np.where(marginal > 0, d / np.where(marginal > 0, marginal, 1.0), uniform)
    return pi


def evaluate_policy(mdp: TabularMdp, reward, policy) -> ValueFunctions:
    r = check_reward(mdp, reward)
    pi = check_policy(mdp, policy)
    P = state_transition(mdp, pi)
    r_pi = np.einsum("sa,sa->s", pi, r)
    v = np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * P, r_pi)
    q = r + mdp.gamma * mdp.transition @ v
    return ValueFunctions(v=v, q=q)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Deterministic greedy policy; ties go to the lowest action index."""
    qmax = q.max(axis=1, keepdims=True)
    slack = TIE_RTOL * np.maximum(1.0, np.abs(qmax))
    best = np.argmax(q >= qmax - slack, axis=1)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), best] = 1.0
    return pi


def value_iteration(mdp: TabularMdp, reward, tol: float, v0=None, max_sweeps: int = 1_000_000):
    """Run Bellman optimality sweeps until the sup-norm update is at most
    ``tol * (1 - gamma) / (2 * gamma)``. Returns ``(v, q, sweeps)``."""
    if not tol > 0:
        raise MdpError("tol must be positive")
    r = check_reward(mdp, reward)
    gamma = mdp.gamma
    threshold = tol * (1 - gamma) / (2 * gamma)
    v = np.zeros(mdp.num_states) if v0 is None else np.array(v0, dtype=float)
    T = mdp.transition
    for sweep in range(1, max_sweeps + 1):
        q = r + gamma * T @ v
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta <= threshold:
            break
    q = r + gamma * T @ v
    return v, q, sweep


def solve_mdp(mdp: TabularMdp, reward, tol: float = 1e-8, v0=None):
    """Optimal control by value iteration followed by a greedy step.

    Returns ``(policy, values, occupancy)`` where ``values`` is the exact
    evaluation of the greedy policy, so ``(1 - gamma) <mu0, v>`` and
    ``<occupancy, reward>`` agree to rounding.
    """
    r = check_reward(mdp, reward)
    _, q, _ = value_iteration(mdp, r, tol, v0=v0)
    pi = greedy_policy(q)
    return pi, evaluate_policy(mdp, r, pi), occupancy_from_policy(mdp, pi)


def normalized_value(mdp: TabularMdp, v) -> float:
    return float((1 - mdp.gamma) * mdp.mu0 @ v)


def best_response_value(mdp: TabularMdp, reward, tol: float = 1e-8) -> float:
    """max over the occupancy polytope of <d, reward>, to within ``tol``."""
    _, values, _ = solve_mdp(mdp, reward, tol)
    return normalized_value(mdp, values.v)
