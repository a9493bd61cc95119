"""Experiment configuration blocks, validated before any solve runs.

Configs are YAML (or JSON, which YAML reads too). Each block is a dataclass
built by ``from_dict``; anything malformed raises ``ConfigError``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .forward import STEP_RULES
from .inverse import OCCUPANCY_MODES
from .rewards import DOMAIN_KINDS, FEATURE_KINDS
from .utilities import UTILITY_KINDS


class ConfigError(ValueError):
    pass


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_keys(block: dict, cls, name: str):
    _require(isinstance(block, dict), f"{name} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(block) - allowed
    _require(not unknown, f"{name}: unknown keys {sorted(unknown)}")


def _existing(path, name) -> Path:
    p = Path(path)
    _require(p.is_file(), f"{name}: file not found: {path}")
    return p


def _positive(value, name):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0,
             f"{name} must be a positive number")


def _table_source(value, name):
    """Inline nested list or a path to a JSON document."""
    if isinstance(value, str):
        _existing(value, name)
    else:
        _require(isinstance(value, list), f"{name} must be a file path or an inline list")


@dataclass
class MdpBlock:
    source: str = "maritime"
    path: str | None = None
    layout: str | None = None
    slip: float | None = None
    gamma: float | None = None
    step_cost: float | None = None
    num_states: int = 4
    num_actions: int = 2
    branching: int = 2
    seed: int = 0
    reward_seed: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> MdpBlock:
        _check_keys(d, cls, "mdp")
        b = cls(**d)
        _require(b.source in ("maritime", "file", "random"), f"mdp.source: unknown {b.source!r}")
        if b.source == "file":
            _require(b.path is not None, "mdp.path is required for source 'file'")
            _existing(b.path, "mdp.path")
        if b.layout is not None:
            _existing(b.layout, "mdp.layout")
        if b.source == "random":
            for k in ("num_states", "num_actions", "branching"):
                _require(isinstance(getattr(b, k), int) and getattr(b, k) >= 1, f"mdp.{k} must be a positive integer")
            _require(b.branching <= b.num_states, "mdp.branching must not exceed num_states")
        if b.gamma is not None:
            _require(0 < b.gamma < 1, "mdp.gamma must lie in (0, 1)")
        if b.slip is not None:
            _require(0 <= b.slip < 1, "mdp.slip must lie in [0, 1)")
        return b


@dataclass
class UtilityBlock:
    kind: str = "linear"
    lam: float = 1.0
    eta: float = 0.1
    budget: float | None = None
    reward: Any = "mdp"
    reference: Any = "uniform_policy"
    cost: Any = None

    @classmethod
    def from_dict(cls, d: dict) -> UtilityBlock:
        _check_keys(d, cls, "utility")
        b = cls(**d)
        _require(b.kind in UTILITY_KINDS, f"utility.kind: unknown {b.kind!r}; expected one of {sorted(UTILITY_KINDS)}")
        if b.kind == "reward_minus_kl":
            _require(isinstance(b.lam, (int, float)) and b.lam >= 0, "utility.lam must be nonnegative")
        elif b.kind == "kl_to_reference":
            _positive(b.lam, "utility.lam")
        if b.kind == "log_barrier_constrained":
            _positive(b.eta, "utility.eta")
            _require(isinstance(b.budget, (int, float)), "utility.budget is required")
            _require(b.cost is not None, "utility.cost is required")
            _table_source(b.cost, "utility.cost")
        if b.reward != "mdp":
            _table_source(b.reward, "utility.reward")
        if b.reference != "uniform_policy":
            _table_source(b.reference, "utility.reference")
        return b


@dataclass
class ForwardSolverBlock:
    max_iters: int = 1000
    tol: float = 1e-6
    step: str = "open_loop"

    @classmethod
    def from_dict(cls, d: dict) -> ForwardSolverBlock:
        _check_keys(d, cls, "solver")
        b = cls(**d)
        _require(isinstance(b.max_iters, int) and b.max_iters >= 1, "solver.max_iters must be a positive integer")
        _positive(b.tol, "solver.tol")
        _require(b.step in STEP_RULES, f"solver.step must be one of {STEP_RULES}")
        return b


@dataclass
class ExpertBlock:
    policy: Any = None
    dataset: str | None = None
    occupancy_mode: str = "policy"

    @classmethod
    def from_dict(cls, d: dict) -> ExpertBlock:
        _check_keys(d, cls, "expert")
        b = cls(**d)
        _require((b.policy is None) != (b.dataset is None), "expert needs exactly one of 'policy' or 'dataset'")
        if b.dataset is not None:
            _existing(b.dataset, "expert.dataset")
        elif b.policy not in ("optimal", "uniform"):
            _table_source(b.policy, "expert.policy")
        _require(b.occupancy_mode in OCCUPANCY_MODES, f"expert.occupancy_mode must be one of {OCCUPANCY_MODES}")
        return b


@dataclass
class FeatureBlock:
    kind: str = "tabular_sa"
    reference: Any = "uniform_policy"
    table: Any = None
    clamp: float = 1e-12

    @classmethod
    def from_dict(cls, d: dict) -> FeatureBlock:
        _check_keys(d, cls, "features")
        b = cls(**d)
        _require(b.kind in FEATURE_KINDS, f"features.kind must be one of {FEATURE_KINDS}")
        _positive(b.clamp, "features.clamp")
        if b.kind == "custom_table":
            _require(b.table is not None, "features.table is required for custom_table")
            _table_source(b.table, "features.table")
        if b.reference != "uniform_policy":
            _table_source(b.reference, "features.reference")
        return b


@dataclass
class DomainBlock:
    kind: str = "box"
    bound: float = 1.0
    anchor: dict | None = None

    @classmethod
    def from_dict(cls, d: dict) -> DomainBlock:
        _check_keys(d, cls, "domain")
        b = cls(**d)
        _require(b.kind in DOMAIN_KINDS, f"domain.kind must be one of {DOMAIN_KINDS}")
        _positive(b.bound, "domain.bound")
        if b.anchor is not None:
            a = b.anchor
            _require(isinstance(a, dict) and ("index" in a) != ("vector" in a),
                     "domain.anchor needs exactly one of 'index' or 'vector'")
            _require(set(a) <= {"index", "vector", "target"}, "domain.anchor: unknown keys")
            _require(isinstance(a.get("target", 1.0), (int, float)), "domain.anchor.target must be a number")
        return b


@dataclass
class InverseSolverBlock:
    eps: float = 1e-2
    max_iters: int = 10_000
    seeds: list = field(default_factory=lambda: [0])

    @classmethod
    def from_dict(cls, d: dict) -> InverseSolverBlock:
        _check_keys(d, cls, "solver")
        b = cls(**d)
        _positive(b.eps, "solver.eps")
        _require(isinstance(b.max_iters, int) and b.max_iters >= 1, "solver.max_iters must be a positive integer")
        _require(isinstance(b.seeds, list) and b.seeds and all(isinstance(s, int) for s in b.seeds),
                 "solver.seeds must be a non-empty list of integers")
        return b


@dataclass
class Lemma2Block:
    layout: str | None = None
    lam: float = 0.3
    slip: float | None = None
    gamma: float | None = None
    tol: float = 1e-4
    max_iters: int = 20_000
    eps: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict) -> Lemma2Block:
        _check_keys(d, cls, "lemma2")
        b = cls(**d)
        _require(isinstance(b.lam, (int, float)) and b.lam >= 0, "lam must be nonnegative")
        if b.layout is not None:
            _existing(b.layout, "layout")
        if b.slip is not None:
            _require(0 <= b.slip < 1, "slip must lie in [0, 1)")
        if b.gamma is not None:
            _require(0 < b.gamma < 1, "gamma must lie in (0, 1)")
        _positive(b.tol, "tol")
        _positive(b.eps, "eps")
        return b


def load_config(path) -> dict:
    if path is None:
        return {}
    p = _existing(path, "--config")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML/JSON: {e}") from None
    doc = {} if doc is None else doc
    _require(isinstance(doc, dict), f"{path}: top level must be a mapping")
    return doc


def section(doc: dict, key: str, cls):
    try:
        return cls.from_dict(doc.get(key) or {})
    except TypeError as e:
        raise ConfigError(f"{key}: {e}") from None
