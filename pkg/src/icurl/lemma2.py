"""The maritime exclusion experiment.

A KL-regularized captain solves CURL on the maritime gridworld. Under the true
reward the captain's policy has positive advantage somewhere it acts, so
standard IRL rejects the true reward; yet a mean-field reward in the
tabular-plus-log-ratio family rationalizes the same policy with (near) zero
exploitability.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import CurlSolution, solve_curl_frank_wolfe, uniform_policy
from .inverse import ADVANTAGE_ATOL, InverseProblem, expert_exploitability, is_feasible_classical_irl
from .mdp import TabularMdp, occupancy_from_policy
from .rewards import FeatureMap, ParamReward
from .scenarios import (
    GridworldSpec,
    build_maritime,
    default_maritime_spec,
    port_arrival_probabilities,
    render_policy,
)
from .utilities import RewardMinusKL

DEFAULT_LAM = 0.3
SUPPORT_ATOL = 1e-12


@dataclass
class Lemma2Report:
    lam: float
    solution: CurlSolution
    ports: dict
    max_advantage: float
    max_advantage_all_states: float
    phi: float
    theta: np.ndarray
    eps: float
    rendered: str

    @property
    def excluded(self) -> bool:
        """Standard IRL rejects the true reward."""
        return self.max_advantage > ADVANTAGE_ATOL

    @property
    def rationalized(self) -> bool:
        return self.phi <= self.eps

    @property
    def reproduced(self) -> bool:
        return self.excluded and self.rationalized


def kl_gradient_theta(reward, lam: float) -> np.ndarray:
    """Parameters under which the tabular-plus-log-ratio reward equals the
    gradient of <d, R> - lam * KL(d || reference)."""
    return np.concatenate([(np.asarray(reward) - lam).ravel(), [-lam]])


def captain_utility(mdp: TabularMdp, reward, lam: float) -> RewardMinusKL:
    prior = occupancy_from_policy(mdp, uniform_policy(mdp))
    return RewardMinusKL(reward, prior, lam)


def run_lemma2(
    spec: GridworldSpec | None = None,
    lam: float = DEFAULT_LAM,
    tol: float = 1e-4,
    max_iters: int = 20_000,
    eps: float = 1e-3,
) -> Lemma2Report:
    spec = default_maritime_spec() if spec is None else spec
    mdp, r_true = build_maritime(spec)
    u = captain_utility(mdp, r_true, lam)
    sol = solve_curl_frank_wolfe(mdp, u, max_iters=max_iters, tol=tol, step="pairwise")
    problem = InverseProblem.from_policy(mdp, sol.policy)

    # advantage test on the states the captain actually visits
    visited = np.flatnonzero(problem.expert_occupancy.sum(axis=1) > SUPPORT_ATOL)
    _, adv_visited = is_feasible_classical_irl(mdp, r_true, problem.expert_policy, visited)
    _, adv_all = is_feasible_classical_irl(mdp, r_true, problem.expert_policy)

    features = FeatureMap.tabular_log_ratio(mdp, u.reference)
    theta = kl_gradient_theta(r_true, lam)
    _, phi = expert_exploitability(problem, ParamReward(features, theta), tol=eps / 10)
    return Lemma2Report(
        lam=lam,
        solution=sol,
        ports=port_arrival_probabilities(spec, mdp, sol.policy),
        max_advantage=adv_visited,
        max_advantage_all_states=adv_all,
        phi=phi,
        theta=theta,
        eps=eps,
        rendered=render_policy(spec, sol.policy),
    )
