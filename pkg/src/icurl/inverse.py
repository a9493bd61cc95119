"""Inverse CURL: feasibility checks, subgradient inversion and empirical experts."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    TabularMdp,
    check_policy,
    evaluate_policy,
    occupancy_from_policy,
    policy_from_occupancy,
)
from .rewards import FeatureMap, ParamReward, ThetaDomain, exploitability_subgradient

log = logging.getLogger(__name__)

ADVANTAGE_ATOL = 1e-9
# "policy": both the frozen mean field and the evaluation term use the occupancy
# of the estimated policy. "empirical": both use the raw estimate. "mixed":
# raw estimate as mean field, policy occupancy for evaluation.
OCCUPANCY_MODES = ("policy", "empirical", "mixed")


@dataclass(frozen=True, eq=False)
class InverseProblem:
    mdp: TabularMdp
    expert_policy: np.ndarray
    expert_occupancy: np.ndarray
    mean_field: np.ndarray
    num_samples: int | None = None
    empirical_occupancy: np.ndarray | None = None

    @classmethod
    def from_policy(cls, mdp: TabularMdp, policy) -> InverseProblem:
        pi = check_policy(mdp, policy)
        d = occupancy_from_policy(mdp, pi)
        return cls(mdp, pi, d, d)

    @property
    def provenance(self) -> str:
        return "exact" if self.num_samples is None else f"empirical({self.num_samples})"


@dataclass
class InversionResult:
    theta: np.ndarray
    final_exploitability: float
    iterations: int
    converged: bool
    seed: int
    trace: list[tuple[float, float]] = field(default_factory=list)
    anchor_residual: float = 0.0


def expert_exploitability(problem: InverseProblem, model: ParamReward, tol: float = 1e-8):
    """``(g, phi)`` for the expert of ``problem`` under ``model``."""
    return exploitability_subgradient(
        problem.mdp, problem.mean_field, model, tol, d_eval=problem.expert_occupancy
    )


def is_feasible_icurl(problem: InverseProblem, model: ParamReward, eps: float, tol: float = 1e-8) -> bool:
    _, phi = expert_exploitability(problem, model, tol)
    return phi <= eps


def is_feasible_classical_irl(mdp: TabularMdp, reward, policy, states=None) -> tuple[bool, float]:
    """Nonpositive-advantage test for standard IRL feasibility.

    ``states`` optionally restricts the test to a subset of states (e.g. those
    the expert visits); by default every state counts.
    """
    adv = evaluate_policy(mdp, reward, policy).advantage
    if states is not None:
        adv = adv[np.asarray(states)]
    worst = float(adv.max())
    return worst <= ADVANTAGE_ATOL, worst


def invert_subgradient(
    problem: InverseProblem,
    features: FeatureMap,
    domain: ThetaDomain,
    eps: float,
    max_iters: int = 10_000,
    seed: int = 0,
) -> InversionResult:
    """Projected subgradient descent on theta -> phi(expert; theta).

    Step ``eta_k = eta_0 / sqrt(k + 1)`` with ``eta_0 = bound / G`` and ``G`` the
    largest subgradient norm seen so far. The inner best response is solved to
    ``eps / 10``. Returns the best iterate; ``iterations`` counts exploitability
    evaluations up to and including the first one at or below ``eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if features.dim != domain.dim:
        raise ValueError(f"feature dimension {features.dim} != domain dimension {domain.dim}")
    rng = np.random.default_rng(seed)
    theta = domain.project(domain.center() + 0.01 * domain.bound * rng.standard_normal(domain.dim))
    inner_tol = eps / 10
    g_scale = 1e-8
    best_theta, best_phi = theta, math.inf
    trace: list[tuple[float, float]] = []
    k = 0
    converged = False
    while k < max_iters:
        g, phi = expert_exploitability(problem, ParamReward(features, theta), inner_tol)
        k += 1
        if phi < best_phi:
            best_theta, best_phi = theta, phi
        g_scale = max(g_scale, float(np.linalg.norm(g)))
        eta = domain.bound / g_scale / math.sqrt(k)
        trace.append((phi, eta))
        if best_phi <= eps:
            converged = True
            break
        theta = domain.project(theta - eta * g)
    if not converged:
        log.info("inversion seed %d stopped at phi=%.3e after %d iterations", seed, best_phi, k)
    return InversionResult(
        theta=best_theta,
        final_exploitability=best_phi,
        iterations=k,
        converged=converged,
        seed=seed,
        trace=trace,
        anchor_residual=domain.anchor_residual(best_theta),
    )


def worker_count() -> int:
    env = os.environ.get("ICURL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def invert_multistart(problem, features, domain, eps, max_iters, seeds) -> list[InversionResult]:
    """Independent inversions per seed, returned in seed order."""
    seeds = list(seeds)
    with ThreadPoolExecutor(max_workers=min(worker_count(), max(1, len(seeds)))) as pool:
        futures = [
            pool.submit(invert_subgradient, problem, features, domain, eps, max_iters, s)
            for s in seeds
        ]
        return [f.result() for f in futures]


def best_result(results: list[InversionResult]) -> InversionResult:
    """Lowest exploitability; earlier seeds win ties."""
    return min(results, key=lambda r: r.final_exploitability)


def empirical_occupancy(num_states: int, num_actions: int, dataset) -> np.ndarray:
    """Visit frequencies count/N, with 1/(S*A) on unseen pairs, renormalized."""
    data = np.asarray(dataset, dtype=int).reshape(-1, 2)
    if len(data) == 0:
        raise ValueError("dataset is empty")
    s, a = data[:, 0], data[:, 1]
    if s.min() < 0 or s.max() >= num_states or a.min() < 0 or a.max() >= num_actions:
        raise ValueError("dataset index out of range")
    counts = np.zeros((num_states, num_actions))
    np.add.at(counts, (s, a), 1.0)
    d = np.where(counts > 0, counts / len(data), 1.0 / (num_states * num_actions))
    return d / d.sum()


def estimate_expert(mdp: TabularMdp, dataset, mode: str = "policy") -> InverseProblem:
    if mode not in OCCUPANCY_MODES:
        raise ValueError(f"unknown occupancy mode {mode!r}; expected one of {OCCUPANCY_MODES}")
    d_hat = empirical_occupancy(mdp.num_states, mdp.num_actions, dataset)
    pi_hat = policy_from_occupancy(d_hat)
    d_pi = occupancy_from_policy(mdp, pi_hat)
    mean_field = d_pi if mode == "policy" else d_hat
    evaluation = d_hat if mode == "empirical" else d_pi
    return InverseProblem(
        mdp=mdp,
        expert_policy=pi_hat,
        expert_occupancy=evaluation,
        mean_field=mean_field,
        num_samples=len(np.asarray(dataset).reshape(-1, 2)),
        empirical_occupancy=d_hat,
    )


def sample_dataset(mdp: TabularMdp, policy, n: int, seed: int) -> np.ndarray:
    """``n`` independent (state, action) draws from the discounted occupancy.

    Each draw picks a horizon t with probability (1 - gamma) gamma^t, rolls the
    policy t steps from mu0 and emits (s_t, a_t). Returns an int array (n, 2).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    pi = check_policy(mdp, policy)
    rng = np.random.default_rng(seed)
    horizon = rng.geometric(1.0 - mdp.gamma, size=n) - 1
    pi_cdf = np.cumsum(pi, axis=1)
    T_cdf = np.cumsum(mdp.transition, axis=2)

    def draw(cdf_rows):
        u = rng.random(len(cdf_rows))[:, None]
        idx = (u > cdf_rows).sum(axis=1)
        return np.minimum(idx, cdf_rows.shape[1] - 1)

    states = draw(np.broadcast_to(np.cumsum(mdp.mu0), (n, mdp.num_states)))
    actions = draw(pi_cdf[states])
    for t in range(1, int(horizon.max()) + 1):
        live = np.flatnonzero(horizon >= t)
        states[live] = draw(T_cdf[states[live], actions[live]])
        actions[live] = draw(pi_cdf[states[live]])
    return np.stack([states, actions], axis=1)
