"""Acceptance criteria 1-10.

Each criterion is a function returning ``(passed, detail)``. Under pytest every
criterion prints one PASS/FAIL line (also repeated in the terminal summary);
``python3 tests/test_acceptance.py`` runs them all without pytest.
"""
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from instances import random_instance, utility_catalog  # noqa: E402
from icurl.cli import main as cli_main  # noqa: E402
from icurl.forward import exploitability, solve_curl_frank_wolfe  # noqa: E402
from icurl.inverse import (  # noqa: E402
    InverseProblem,
    estimate_expert,
    expert_exploitability,
    invert_subgradient,
    sample_dataset,
)
from icurl.mdp import (  # noqa: E402
    TabularMdp,
    evaluate_policy,
    flow_residual,
    normalized_value,
    occupancy_from_policy,
    value_iteration,
)
from icurl.rewards import FeatureMap, ParamReward, ThetaDomain, exploitability_subgradient  # noqa: E402
from icurl.scenarios import planted_reward_instance, random_mdp  # noqa: E402
from icurl.utilities import (  # noqa: E402
    ImitationL2,
    InfeasiblePointError,
    Linear,
    fenchel_conjugate_quadratic,
    quadratic_energy,
)

RESULTS: dict[int, tuple[bool, str]] = {}


def _line(number, passed, detail):
    return f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


# -- 1 ----------------------------------------------------------------------------------

def occupancy_correctness():
    rng = np.random.default_rng(2024)
    worst_flow = worst_mass = worst_identity = 0.0
    for i in range(200):
        S, A = int(rng.integers(1, 11)), int(rng.integers(1, 5))
        gamma = float(rng.choice([0.5, 0.9, 0.99]))
        mdp = random_mdp(S, A, int(rng.integers(1, S + 1)), gamma, seed=i)
        pi = rng.dirichlet(np.ones(A), size=S)
        r = rng.normal(size=(S, A))
        d = occupancy_from_policy(mdp, pi)
        worst_flow = max(worst_flow, flow_residual(mdp, d))
        worst_mass = max(worst_mass, abs(d.sum() - 1.0), float(max(0.0, -d.min())))
        v = evaluate_policy(mdp, r, pi).v
        worst_identity = max(worst_identity, abs(np.sum(d * r) - normalized_value(mdp, v)))
    ok = worst_flow <= 1e-9 and worst_mass <= 1e-9 and worst_identity <= 1e-8
    return ok, f"200 MDPs: flow {worst_flow:.1e}, mass {worst_mass:.1e}, value identity {worst_identity:.1e}"


# -- 2 ----------------------------------------------------------------------------------

def forward_oracle_equivalence():
    worst, count = 0.0, 0
    for S in (1, 2, 3):
        for A in (1, 2, 3):
            for seed in range(50):
                rng = np.random.default_rng(seed)
                mdp = random_mdp(S, A, int(rng.integers(1, S + 1)), 0.9, seed=1000 * S + 100 * A + seed)
                r = rng.normal(size=(S, A))
                sol = solve_curl_frank_wolfe(mdp, Linear(r), tol=1e-8)
                best, _ = oracles.brute_force_best(mdp.transition, mdp.mu0, mdp.gamma, r)
                worst = max(worst, abs(sol.utility_value - best))
                count += 1
    return worst <= 1e-6, f"{count} linear instances vs enumeration: max |diff| {worst:.1e}"


# -- 3 ----------------------------------------------------------------------------------

def mfne_equivalence(tol=1e-5):
    solves = converged = 0
    worst = -np.inf
    failures = []
    for seed in range(20):
        mdp, ref, rng = random_instance(seed)
        for u in utility_catalog(mdp, ref, rng):
            sol = solve_curl_frank_wolfe(mdp, u, max_iters=5000, tol=tol, step="pairwise")
            solves += 1
            if not sol.converged:
                failures.append(f"{seed}/{u.kind}")
                continue
            converged += 1
            phi = exploitability(mdp, sol.occupancy, u.gradient, sol.occupancy, tol)
            worst = max(worst, phi)
    ok = converged == solves and worst <= 2 * tol
    detail = f"{converged}/{solves} converged, max exploitability {worst:.2e} (bound {2 * tol:g})"
    if failures:
        detail += f"; not converged: {', '.join(failures)}"
    return ok, detail


# -- 4 ----------------------------------------------------------------------------------

def _non_kink_theta(mdp, d, features, rng, margin=1e-3):
    while True:
        theta = rng.normal(size=features.dim)
        _, q, _ = value_iteration(mdp, ParamReward(features, theta).table(d), 1e-12)
        top = np.sort(q, axis=1)
        if np.all(top[:, -1] - top[:, -2] > margin):
            return theta


def _interior_point(u, shape, rng):
    """Random interior occupancy inside the utility's domain."""
    while True:
        d = rng.dirichlet(np.ones(np.prod(shape))).reshape(shape) + 1e-3
        d /= d.sum()
        try:
            u.value(d)
            return d
        except InfeasiblePointError:
            continue


def gradient_suite():
    rng = np.random.default_rng(7)
    mdp, ref, _ = random_instance(3)
    worst_u = {}
    for u in utility_catalog(mdp, ref, rng):
        errs = []
        for _ in range(20):
            d = _interior_point(u, mdp.shape, rng)
            errs.append(oracles.relative_error(u.gradient(d), oracles.central_difference(u.value, d, 1e-6)))
        worst_u[u.kind] = max(errs)

    d_exp = occupancy_from_policy(mdp, rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states))
    worst_phi = 0.0
    for features in (FeatureMap.tabular(mdp), FeatureMap.tabular_log_ratio(mdp, ref)):
        def phi(t):
            return exploitability_subgradient(mdp, d_exp, ParamReward(features, t), 1e-12)[1]
        for _ in range(20):
            theta = _non_kink_theta(mdp, d_exp, features, rng)
            g, _ = exploitability_subgradient(mdp, d_exp, ParamReward(features, theta), 1e-12)
            worst_phi = max(worst_phi, oracles.relative_error(g, oracles.central_difference(phi, theta, 1e-6)))
    ok = max(worst_u.values()) <= 1e-5 and worst_phi <= 1e-4
    return ok, (f"utilities max rel err {max(worst_u.values()):.1e} over {len(worst_u)} kinds; "
                f"phi subgradient max rel err {worst_phi:.1e}")


# -- 5 ----------------------------------------------------------------------------------

def lemma2_reproduction():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        code = cli_main(["repro-lemma2", "--out", tmp])
        doc = yaml.safe_load((Path(tmp) / "lemma2.json").read_text())
    elapsed = time.perf_counter() - t0
    ok = code == 0 and doc["max_advantage_visited"] > 0 and doc["phi"] <= 1e-3 and elapsed < 60
    return ok, (f"exit {code}, max advantage {doc['max_advantage_visited']:.3g} > 0, "
                f"phi {doc['phi']:.2e} <= 1e-3, {elapsed:.1f}s")


# -- 6 ----------------------------------------------------------------------------------

def inversion_convergence():
    inst = planted_reward_instance()
    problem = InverseProblem.from_policy(inst.mdp, inst.expert_policy)
    j = inst.anchor_index
    domain = ThetaDomain.anchored_box(inst.mdp.num_states * inst.mdp.num_actions, inst.bound, j,
                                      inst.theta_star[j])
    runs = {eps: invert_subgradient(problem, FeatureMap.tabular(inst.mdp), domain, eps, 100_000, seed=0)
            for eps in (1e-1, 1e-2)}
    it1, it2 = runs[1e-1].iterations, runs[1e-2].iterations
    ok = all(r.converged for r in runs.values()) and it2 <= 150 * it1
    return ok, f"iterations {it1} (eps 1e-1), {it2} (eps 1e-2); ratio {it2 / it1:.1f} <= 150"


# -- 7 ----------------------------------------------------------------------------------

def exploitability_convexity():
    inst = planted_reward_instance()
    mdp = inst.mdp
    rng = np.random.default_rng(11)
    d_exp = occupancy_from_policy(mdp, rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states))
    features = FeatureMap.tabular(mdp)

    def phi(t):
        return exploitability_subgradient(mdp, d_exp, ParamReward(features, t), 1e-10)[1]

    worst_violation, lowest = -np.inf, np.inf
    for _ in range(100):
        t1, t2, w = rng.normal(size=features.dim), rng.normal(size=features.dim), rng.uniform()
        p1, p2, pm = phi(t1), phi(t2), phi(w * t1 + (1 - w) * t2)
        worst_violation = max(worst_violation, pm - (w * p1 + (1 - w) * p2))
        lowest = min(lowest, p1, p2, pm)
    at_zero = phi(np.zeros(features.dim))
    ok = worst_violation <= 1e-7 and lowest >= -1e-9 and at_zero == 0.0
    return ok, f"max convexity violation {worst_violation:.1e}, min phi {lowest:.1e}, phi(0) = {at_zero}"


# -- 8 ----------------------------------------------------------------------------------

def empirical_estimation():
    mdp = random_mdp(3, 2, 2, 0.9, seed=2)
    pi = np.random.default_rng(2).dirichlet(np.ones(2), size=3)
    n = 50_000
    data = sample_dataset(mdp, pi, n, seed=0)
    freq = np.zeros(mdp.shape)
    np.add.at(freq, (data[:, 0], data[:, 1]), 1.0 / n)
    cell_dev = float(np.abs(freq - occupancy_from_policy(mdp, pi)).max())

    mdp = random_mdp(4, 3, 2, 0.9, seed=1)
    rng = np.random.default_rng(0)
    pi = 0.5 * rng.dirichlet(np.ones(3), size=4) + 0.5 / 3
    model = ParamReward(FeatureMap.tabular(mdp), rng.normal(size=12))
    exact = expert_exploitability(InverseProblem.from_policy(mdp, pi), model)[1]
    medians = []
    for size in (100, 1000, 10_000):
        gaps = [abs(expert_exploitability(estimate_expert(mdp, sample_dataset(mdp, pi, size, s)), model)[1] - exact)
                for s in range(20)]
        medians.append(float(np.median(gaps)))
    ok = cell_dev <= 0.01 and medians[0] > medians[1] > medians[2]
    return ok, (f"max cell deviation {cell_dev:.4f} at n=50000; median phi gap "
                + " > ".join(f"{m:.4f}" for m in medians) + " for N=1e2, 1e3, 1e4")


# -- 9 ----------------------------------------------------------------------------------

def conjugate_consistency():
    rng = np.random.default_rng(9)
    A = 5
    center = rng.normal(0.2, 0.3, size=(1, A))
    mdp = TabularMdp(np.ones((1, A, 1)), [1.0], 0.9)
    sol = solve_curl_frank_wolfe(mdp, ImitationL2(center), max_iters=5000, tol=1e-10, step="pairwise")
    direct = quadratic_energy(center, sol.occupancy)

    def payoff(d):  # max over y of <d, y> - E*(y), attained at y = grad E(d)
        y = d - center.ravel()
        return float(d @ y) - fenchel_conjugate_quadratic(center, y)

    d = np.full(A, 1.0 / A)
    for _ in range(5000):
        d = oracles.simplex_projection(d - 0.5 * (d - center.ravel()))
    game_gap = abs(payoff(d) - direct)

    bicon = 0.0
    for _ in range(20):
        c, x = rng.normal(size=6), rng.normal(size=6)
        bicon = max(bicon, abs(float(x @ (x - c)) - fenchel_conjugate_quadratic(c, x - c) - quadratic_energy(c, x)))
    ok = game_gap <= 1e-6 and bicon <= 1e-6
    return ok, f"zero-sum vs direct optimum {game_gap:.1e}; biconjugation {bicon:.1e}"


# -- 10 ---------------------------------------------------------------------------------

def cli_determinism():
    inst = planted_reward_instance()
    planted_mdp = {"source": "random", "num_states": 4, "num_actions": 3, "branching": 2, "seed": 1}
    configs = {
        "solve-curl": {"mdp": {"source": "maritime"}, "utility": {"kind": "reward_minus_kl", "lam": 0.3},
                       "solver": {"step": "pairwise", "tol": 1e-3, "max_iters": 20000}},
        "gen-dataset": {"mdp": planted_mdp, "expert": {"policy": inst.expert_policy.tolist()}, "n": 2000},
        "invert": {"mdp": planted_mdp, "expert": {"policy": inst.expert_policy.tolist()},
                   "domain": {"kind": "box", "bound": inst.bound,
                              "anchor": {"index": inst.anchor_index, "target": 1.0}},
                   "solver": {"eps": 1e-2, "seeds": [0, 1, 2, 3]}},
        "eval-exploitability": {"mdp": planted_mdp, "expert": {"policy": "uniform"}, "theta": [0.3] * 12},
        "repro-lemma2": {"tol": 1e-3},
    }
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for command, doc in configs.items():
            cfg = tmp / f"{command}.yaml"
            cfg.write_text(yaml.safe_dump(doc))
            outputs = []
            for rep in range(2):
                out = tmp / f"{command}-{rep}"
                cli_main([command, "--config", str(cfg), "--out", str(out), "--seed", "5"])
                outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
            if not outputs[0] or outputs[0] != outputs[1]:
                mismatched.append(command)
    ok = not mismatched
    return ok, f"{len(configs)} commands run twice; " + ("all byte-identical" if ok else f"differ: {mismatched}")


CRITERIA = {
    1: occupancy_correctness,
    2: forward_oracle_equivalence,
    3: mfne_equivalence,
    4: gradient_suite,
    5: lemma2_reproduction,
    6: inversion_convergence,
    7: exploitability_convexity,
    8: empirical_estimation,
    9: conjugate_consistency,
    10: cli_determinism,
}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys, acceptance_report):
    passed, detail = CRITERIA[number]()
    line = _line(number, passed, detail)
    acceptance_report.append(line)
    with capsys.disabled():
        print(f"\n{line}")
    assert passed, line


if __name__ == "__main__":
    failed = 0
    for number, check in CRITERIA.items():
        passed, detail = check()
        failed += not passed
        print(_line(number, passed, detail), flush=True)
    sys.exit(1 if failed else 0)
