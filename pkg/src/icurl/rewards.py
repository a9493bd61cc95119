"""Mean-field reward families linear in their parameters.

``R(s, a, d; theta) = <theta, psi(s, a, d)>``. Because the reward is linear in
theta, the expert's exploitability is a maximum of affine functions of theta
minus an affine function, hence convex, and the best response supplies a
subgradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, solve_mdp
from .utilities import LOG_FLOOR

FEATURE_KINDS = ("tabular_sa", "tabular_sa_plus_log_ratio", "custom_table")
DOMAIN_KINDS = ("box", "l2_ball")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature tensor psi[s, a, k] as a function of the mean-field occupancy.

    * ``tabular_sa``: one indicator per (s, a), independent of d.
    * ``tabular_sa_plus_log_ratio``: the indicators plus log(d / reference).
    * ``custom_table``: a fixed user tensor ``table[s, a, k]``.
    """

    kind: str
    shape: tuple[int, int]
    reference: np.ndarray | None = None
    table: np.ndarray | None = None
    clamp: float = LOG_FLOOR

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.kind == "tabular_sa_plus_log_ratio":
            if self.reference is None:
                raise ValueError("log-ratio features need a reference occupancy")
            ref = np.asarray(self.reference, dtype=float)
            if ref.shape != self.shape:
                raise ValueError(f"reference shape {ref.shape} != {self.shape}")
            object.__setattr__(self, "reference", ref)
        if self.kind == "custom_table":
            if self.table is None:
                raise ValueError("custom_table features need a table")
            table = np.asarray(self.table, dtype=float)
            if table.ndim != 3 or table.shape[:2] != self.shape:
                raise ValueError(f"custom table must have shape (S, A, p), got {table.shape}")
            object.__setattr__(self, "table", table)

    @classmethod
    def tabular(cls, mdp: TabularMdp) -> FeatureMap:
        return cls("tabular_sa", mdp.shape)

    @classmethod
    def tabular_log_ratio(cls, mdp: TabularMdp, reference, clamp: float = LOG_FLOOR) -> FeatureMap:
        return cls("tabular_sa_plus_log_ratio", mdp.shape, reference=reference, clamp=clamp)

    @property
    def dim(self) -> int:
        S, A = self.shape
        if self.kind == "tabular_sa":
            return S * A
        if self.kind == "tabular_sa_plus_log_ratio":
            return S * A + 1
        return self.table.shape[2]

    def __call__(self, d=None) -> np.ndarray:
        S, A = self.shape
        if self.kind == "custom_table":
            return self.table
        eye = np.eye(S * A).reshape(S, A, S * A)
        if self.kind == "tabular_sa":
            return eye
        d = np.asarray(d, dtype=float)
        ratio = np.log(np.maximum(d, self.clamp)) - np.log(np.maximum(self.reference, self.clamp))
        return np.concatenate([eye, ratio[:, :, None]], axis=2)


@dataclass(frozen=True, eq=False)
class ThetaDomain:
    """Compact convex parameter set: a box or a Euclidean ball of radius ``bound``,
    optionally cut by the hyperplane ``<theta, anchor> = anchor_target``."""

    kind: str
    bound: float
    dim: int
    anchor: np.ndarray | None = None
    anchor_target: float = 0.0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not self.bound > 0:
            raise ValueError("bound must be positive")
        if self.anchor is not None:
            v = np.asarray(self.anchor, dtype=float)
            if v.shape != (self.dim,) or not np.any(v):
                raise ValueError("anchor must be a nonzero vector of length dim")
            reach = self.bound * (np.abs(v).sum() if self.kind == "box" else np.linalg.norm(v))
            if abs(self.anchor_target) > reach:
                raise ValueError("anchor hyperplane does not meet the domain")
            object.__setattr__(self, "anchor", v)

    @classmethod
    def anchored_box(cls, dim: int, bound: float, index: int, target: float = 1.0) -> ThetaDomain:
        """Box with one coordinate pinned, the usual scale normalization."""
        v = np.zeros(dim)
        v[index] = 1.0
        return cls("box", bound, dim, anchor=v, anchor_target=target)

    def _base(self, theta):
        if self.kind == "box":
            return np.clip(theta, -self.bound, self.bound)
        norm = np.linalg.norm(theta)
        return theta if norm <= self.bound else theta * (self.bound / norm)

    def project(self, theta) -> np.ndarray:
        """Exact Euclidean projection, onto the box/ball or its slice by the anchor."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta must have shape ({self.dim},), got {theta.shape}")
        if self.anchor is None:
            return self._base(theta)
        v, t = self.anchor, self.anchor_target
        on_plane = theta - (theta @ v - t) / (v @ v) * v
        if self.kind == "l2_ball":
            # the slice is a ball in the hyperplane around the foot of the origin
            foot = t / (v @ v) * v
            radius = np.sqrt(max(self.bound**2 - foot @ foot, 0.0))
            offset = on_plane - foot
            norm = np.linalg.norm(offset)
            return on_plane if norm <= radius else foot + offset * (radius / norm)
        if np.all(np.abs(on_plane) <= self.bound):
            return on_plane
        # box: clip(theta - tau * v) with the multiplier tau found by bisection
        def excess(tau):
            return np.clip(theta - tau * v, -self.bound, self.bound) @ v - t

        span = (np.abs(theta).max() + self.bound) / np.abs(v[v != 0]).min()
        lo, hi = -span, span
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, abs(mid)):
                break
        return np.clip(theta - 0.5 * (lo + hi) * v, -self.bound, self.bound)

    def anchor_residual(self, theta) -> float:
        if self.anchor is None:
            return 0.0
        return abs(float(np.asarray(theta) @ self.anchor) - self.anchor_target)

    def center(self) -> np.ndarray:
        return self.project(np.zeros(self.dim))


def project_theta(domain: ThetaDomain, theta) -> np.ndarray:
    return domain.project(theta)


@dataclass(frozen=True, eq=False)
class ParamReward:
    features: FeatureMap
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.features.dim,):
            raise ValueError(f"theta must have length {self.features.dim}, got {theta.shape}")
        object.__setattr__(self, "theta", theta)

    def table(self, d=None) -> np.ndarray:
        return self.features(d) @ self.theta


def reward_table_at(model: ParamReward, d) -> np.ndarray:
    return model.table(d)


def exploitability_subgradient(
    mdp: TabularMdp,
    d_expert,
    model: ParamReward,
    tol: float = 1e-8,
    d_eval=None,
) -> tuple[np.ndarray, float]:
    """Exploitability of the expert under ``model`` and a subgradient in theta.

    The mean-field argument is frozen at ``d_expert``; the expert's own value is
    taken at ``d_eval`` (defaults to ``d_expert``). Returns ``(g, phi)`` with
    ``g = sum_{s,a} (d_best - d_eval)(s, a) * psi(s, a, d_expert)``.
    """
    d_expert = np.asarray(d_expert, dtype=float)
    d_eval = d_expert if d_eval is None else np.asarray(d_eval, dtype=float)
    psi = model.features(d_expert)
    r = psi @ model.theta
    _, _, d_best = solve_mdp(mdp, r, tol)
    diff = d_best - d_eval
    phi = float(np.sum(diff * r))
    g = np.einsum("sa,sak->k", diff, psi)
    return g, phi
