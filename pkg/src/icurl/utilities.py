"""Concave utilities of the occupancy measure.

Every utility exposes ``value(d)`` and ``gradient(d)``; the gradient at a
population occupancy is the mean-field reward of the induced game. Logs are
taken of ``max(d, LOG_FLOOR)`` so that boundary occupancies stay finite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, ClassVar

import numpy as np

LOG_FLOOR = 1e-12


class InfeasiblePointError(ValueError):
    """Raised when a barrier utility is evaluated outside its domain."""


def _clamped_log(x):
    return np.log(np.maximum(x, LOG_FLOOR))


def _array(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Linear:
    reward: np.ndarray
    kind: ClassVar[str] = "linear"

    def __post_init__(self):
        object.__setattr__(self, "reward", _array(self.reward))

    def value(self, d):
        return float(np.sum(d * self.reward))

    def gradient(self, d):
        return np.broadcast_to(self.reward, np.shape(d)).copy()


@dataclass(frozen=True, eq=False)
class Entropy:
    """Shannon entropy of the state-action occupancy (pure exploration)."""

    kind: ClassVar[str] = "entropy"

    def value(self, d):
        d = np.asarray(d, dtype=float)
        return float(-np.sum(d * _clamped_log(d)))

    def gradient(self, d):
        return -_clamped_log(d) - 1.0


@dataclass(frozen=True, eq=False)
class KLToReference:
    """Negative KL(d || reference), e.g. imitation of an expert occupancy."""

    reference: np.ndarray
    lam: float = 1.0
    kind: ClassVar[str] = "kl_to_reference"

    def __post_init__(self):
        object.__setattr__(self, "reference", _array(self.reference))
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    def value(self, d):
        d = np.asarray(d, dtype=float)
        return float(-self.lam * kl_divergence(d, self.reference))

    def gradient(self, d):
        return -self.lam * (_clamped_log(d) - _clamped_log(self.reference) + 1.0)


@dataclass(frozen=True, eq=False)
class RewardMinusKL:
    """<d, R> - lam * KL(d || reference): offline RL and human-regularized RL."""

    reward: np.ndarray
    reference: np.ndarray
    lam: float
    kind: ClassVar[str] = "reward_minus_kl"

    def __post_init__(self):
        object.__setattr__(self, "reward", _array(self.reward))
        object.__setattr__(self, "reference", _array(self.reference))
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")

    def value(self, d):
        d = np.asarray(d, dtype=float)
        return float(np.sum(d * self.reward) - self.lam * kl_divergence(d, self.reference))

    def gradient(self, d):
        return self.reward - self.lam * (_clamped_log(d) - _clamped_log(self.reference) + 1.0)


@dataclass(frozen=True, eq=False)
class ImitationL2:
    reference: np.ndarray
    kind: ClassVar[str] = "imitation_l2"

    def __post_init__(self):
        object.__setattr__(self, "reference", _array(self.reference))

    def value(self, d):
        diff = np.asarray(d, dtype=float) - self.reference
        return float(-np.sum(diff * diff))

    def gradient(self, d):
        return -2.0 * (np.asarray(d, dtype=float) - self.reference)


@dataclass(frozen=True, eq=False)
class LogBarrierConstrained:
    """Smooth surrogate of max <d, R> s.t. <d, C> <= budget."""

    reward: np.ndarray
    cost: np.ndarray
    budget: float
    eta: float = 0.1
    kind: ClassVar[str] = "log_barrier_constrained"

    def __post_init__(self):
        object.__setattr__(self, "reward", _array(self.reward))
        object.__setattr__(self, "cost", _array(self.cost))
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def slack(self, d):
        s = self.budget - float(np.sum(np.asarray(d, dtype=float) * self.cost))
        if not s > 0:
            raise InfeasiblePointError(f"constraint violated: <d, C> exceeds budget by {-s:.3g}")
        return s

    def value(self, d):
        d = np.asarray(d, dtype=float)
        return float(np.sum(d * self.reward) + self.eta * np.log(self.slack(d)))

    def gradient(self, d):
        return self.reward - self.eta * self.cost / self.slack(d)


ConcaveUtility = Linear | Entropy | KLToReference | RewardMinusKL | ImitationL2 | LogBarrierConstrained

UTILITY_KINDS = {
    cls.kind: cls
    for cls in (Linear, Entropy, KLToReference, RewardMinusKL, ImitationL2, LogBarrierConstrained)
}


def kl_divergence(p, q) -> float:
    """KL(p || q) with both arguments floored before the log."""
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (_clamped_log(p) - _clamped_log(q))))


def utility_value(u: ConcaveUtility, d) -> float:
    return u.value(d)


def utility_gradient(u: ConcaveUtility, d) -> np.ndarray:
    return u.gradient(d)


def mean_field_reward(u: ConcaveUtility) -> Callable[[np.ndarray], np.ndarray]:
    """The map d -> grad F(d) used as the reward of the induced mean-field game."""
    return u.gradient


def quadratic_energy(center, d) -> float:
    """E(d) = 0.5 * ||d - center||^2, the convex counterpart of ``ImitationL2``."""
    diff = np.ravel(d) - np.ravel(center)
    return 0.5 * float(diff @ diff)


def fenchel_conjugate_quadratic(center, y) -> float:
    """Closed-form conjugate of ``quadratic_energy``: 0.5 * ||y||^2 + <y, center>."""
    center = np.ravel(np.asarray(center, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    if center.shape != y.shape:
        raise ValueError(f"dimension mismatch: {center.shape} vs {y.shape}")
    return 0.5 * float(y @ y) + float(y @ center)
