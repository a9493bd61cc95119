import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from icurl.forward import solve_curl_frank_wolfe, uniform_policy
from icurl.mdp import occupancy_from_policy, solve_mdp
from icurl.rewards import (
    FeatureMap,
    ParamReward,
    ThetaDomain,
    exploitability_subgradient,
    project_theta,
    reward_table_at,
)
from icurl.scenarios import random_mdp
from icurl.utilities import RewardMinusKL


def phi(mdp, d_expert, features, theta, tol=1e-12):
    return exploitability_subgradient(mdp, d_expert, ParamReward(features, theta), tol)[1]


# -- features and tables -----------------------------------------------------------

def test_zero_theta_zero_table():
    mdp = random_mdp(3, 2, 2, 0.9, seed=0)
    f = FeatureMap.tabular_log_ratio(mdp, np.full((3, 2), 1 / 6))
    np.testing.assert_array_equal(ParamReward(f, np.zeros(f.dim)).table(np.full((3, 2), 0.1)), 0.0)


def test_tabular_features_reproduce_reward():
    mdp = random_mdp(3, 2, 2, 0.9, seed=0)
    r = np.random.default_rng(0).normal(size=(3, 2))
    model = ParamReward(FeatureMap.tabular(mdp), r.ravel())
    for d in (None, np.full((3, 2), 1 / 6)):
        np.testing.assert_array_equal(model.table(d), r)
    assert model.features.dim == 6


def test_log_ratio_vanishes_at_reference():
    mdp = random_mdp(3, 2, 2, 0.9, seed=1)
    ref = occupancy_from_policy(mdp, uniform_policy(mdp))
    r = np.random.default_rng(1).normal(size=(3, 2))
    model = ParamReward(FeatureMap.tabular_log_ratio(mdp, ref), np.append(r.ravel(), 5.0))
    assert model.features.dim == 7
    np.testing.assert_allclose(reward_table_at(model, ref), r, atol=1e-15)


def test_custom_table():
    table = np.random.default_rng(2).normal(size=(2, 3, 4))
    f = FeatureMap("custom_table", (2, 3), table=table)
    theta = np.arange(4.0)
    np.testing.assert_allclose(ParamReward(f, theta).table(), table @ theta)


def test_feature_validation():
    with pytest.raises(ValueError):
        FeatureMap("tabular_sa_plus_log_ratio", (2, 2))
    with pytest.raises(ValueError):
        FeatureMap("custom_table", (2, 2), table=np.zeros((2, 3, 1)))
    with pytest.raises(ValueError):
        FeatureMap("polynomial", (2, 2))
    with pytest.raises(ValueError):
        ParamReward(FeatureMap("tabular_sa", (2, 2)), np.zeros(3))


# -- domain ------------------------------------------------------------------------

def test_box_clamp():
    np.testing.assert_array_equal(ThetaDomain("box", 1.0, 2).project([2.0, -3.0]), [1.0, -1.0])


def test_ball_scaling():
    np.testing.assert_allclose(ThetaDomain("l2_ball", 1.0, 2).project([3.0, 4.0]), [0.6, 0.8])


@pytest.mark.parametrize("kind", ["box", "l2_ball"])
def test_inside_points_unchanged(kind):
    theta = np.array([0.1, -0.2, 0.3])
    np.testing.assert_array_equal(project_theta(ThetaDomain(kind, 1.0, 3), theta), theta)


def test_domain_validation():
    with pytest.raises(ValueError):
        ThetaDomain("box", 0.0, 2)
    with pytest.raises(ValueError):
        ThetaDomain("simplex", 1.0, 2)
    with pytest.raises(ValueError):
        ThetaDomain("box", 1.0, 2, anchor=np.array([1.0, 0.0]), anchor_target=1.5)
    with pytest.raises(ValueError):
        ThetaDomain("l2_ball", 1.0, 2, anchor=np.array([1.0, 1.0]), anchor_target=1.5)
    with pytest.raises(ValueError):
        ThetaDomain("box", 1.0, 2).project(np.zeros(3))


def test_anchored_box_center():
    dom = ThetaDomain.anchored_box(5, 2.0, 3, target=-1.0)
    np.testing.assert_array_equal(dom.center(), [0, 0, 0, -1.0, 0])
    assert dom.anchor_residual(dom.center()) == 0.0


def base_projection(kind, bound):
    if kind == "box":
        return lambda x: np.clip(x, -bound, bound)
    return lambda x: x if np.linalg.norm(x) <= bound else x * bound / np.linalg.norm(x)


@pytest.mark.parametrize("kind", ["box", "l2_ball"])
@pytest.mark.parametrize("seed", range(5))
def test_anchored_projection_matches_dykstra(kind, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4)
    bound = 1.0
    reach = bound * (np.abs(v).sum() if kind == "box" else np.linalg.norm(v))
    target = float(rng.uniform(-0.8, 0.8) * reach)
    dom = ThetaDomain(kind, bound, 4, anchor=v, anchor_target=target)
    theta = rng.normal(scale=3.0, size=4)
    plane = lambda x: x - (x @ v - target) / (v @ v) * v
    expected = oracles.dykstra(theta, [plane, base_projection(kind, bound)])
    got = dom.project(theta)
    np.testing.assert_allclose(got, expected, atol=1e-7)
    assert dom.anchor_residual(got) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["box", "l2_ball"]), st.integers(0, 10_000))
def test_property_projection_idempotent_and_feasible(kind, seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 6))
    dom = ThetaDomain(kind, float(rng.uniform(0.5, 3)), dim)
    p = dom.project(rng.normal(scale=5, size=dim))
    np.testing.assert_allclose(dom.project(p), p, atol=1e-12)
    if kind == "box":
        assert np.all(np.abs(p) <= dom.bound + 1e-12)
    else:
        assert np.linalg.norm(p) <= dom.bound + 1e-12


# -- exploitability in theta ---------------------------------------------------------

@pytest.fixture
def instance():
    mdp = random_mdp(4, 3, 2, 0.9, seed=7)
    rng = np.random.default_rng(7)
    pi = rng.dirichlet(np.ones(3), size=4)
    return mdp, occupancy_from_policy(mdp, pi)


def test_zero_theta_zero_phi(instance):
    mdp, d = instance
    f = FeatureMap.tabular(mdp)
    g, value = exploitability_subgradient(mdp, d, ParamReward(f, np.zeros(f.dim)))
    assert value == 0.0
    _, _, d_star = solve_mdp(mdp, np.zeros(mdp.shape))
    np.testing.assert_allclose(g, (d_star - d).ravel())


def test_optimal_expert_has_no_exploitability():
    mdp = random_mdp(4, 3, 2, 0.9, seed=3)
    r = np.random.default_rng(3).normal(size=(4, 3))
    _, _, d = solve_mdp(mdp, r)
    assert phi(mdp, d, FeatureMap.tabular(mdp), r.ravel(), tol=1e-10) <= 1e-8


def test_log_ratio_span_rationalizes_kl_expert():
    mdp = random_mdp(4, 3, 3, 0.9, seed=2)
    ref = occupancy_from_policy(mdp, uniform_policy(mdp))
    r = np.random.default_rng(2).uniform(size=(4, 3))
    lam = 0.5
    sol = solve_curl_frank_wolfe(mdp, RewardMinusKL(r, ref, lam), max_iters=5000, tol=1e-6, step="pairwise")
    theta = np.append((r - lam).ravel(), -lam)
    assert phi(mdp, sol.occupancy, FeatureMap.tabular_log_ratio(mdp, ref), theta, tol=1e-9) <= 2e-6


def non_kink_theta(mdp, d, features, rng, margin=1e-3):
    """A random theta whose best response is unique with a clear Q-gap."""
    from icurl.mdp import value_iteration
    while True:
        theta = rng.normal(size=features.dim)
        r = ParamReward(features, theta).table(d)
        _, q, _ = value_iteration(mdp, r, 1e-12)
        top = np.sort(q, axis=1)
        if np.all(top[:, -1] - top[:, -2] > margin):
            return theta


@pytest.mark.parametrize("kind", ["tabular_sa", "tabular_sa_plus_log_ratio"])
def test_subgradient_finite_differences(instance, kind):
    mdp, d = instance
    rng = np.random.default_rng(11)
    ref = occupancy_from_policy(mdp, uniform_policy(mdp))
    f = FeatureMap.tabular(mdp) if kind == "tabular_sa" else FeatureMap.tabular_log_ratio(mdp, ref)
    for _ in range(20):
        theta = non_kink_theta(mdp, d, f, rng)
        g, _ = exploitability_subgradient(mdp, d, ParamReward(f, theta), tol=1e-12)
        fd = oracles.central_difference(lambda t: phi(mdp, d, f, t), theta, h=1e-6)
        assert oracles.relative_error(g, fd) <= 1e-4


def test_convexity_and_nonnegativity(instance):
    mdp, d = instance
    rng = np.random.default_rng(5)
    f = FeatureMap.tabular(mdp)
    for _ in range(100):
        t1, t2, w = rng.normal(size=f.dim), rng.normal(size=f.dim), rng.uniform()
        p1, p2 = phi(mdp, d, f, t1), phi(mdp, d, f, t2)
        assert p1 >= -1e-9 and p2 >= -1e-9
        assert phi(mdp, d, f, w * t1 + (1 - w) * t2) <= w * p1 + (1 - w) * p2 + 1e-7


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 10.0))
def test_property_positive_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(3, 2, 2, 0.9, seed=seed)
    d = occupancy_from_policy(mdp, rng.dirichlet(np.ones(2), size=3))
    f = FeatureMap.tabular(mdp)
    theta = rng.normal(size=f.dim)
    assert phi(mdp, d, f, c * theta) == pytest.approx(c * phi(mdp, d, f, theta), abs=1e-8)
