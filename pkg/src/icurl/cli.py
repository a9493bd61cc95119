"""Command-line front end.

    icurl solve-curl          --config cfg.yaml --out results/
    icurl invert              --config cfg.yaml --out results/ --seed 3
    icurl eval-exploitability --config cfg.yaml --out results/
    icurl gen-dataset         --config cfg.yaml --out results/
    icurl repro-lemma2        [--config cfg.yaml] [--out results/]

Exit codes: 0 success, 1 Lemma-2 exclusion not reproduced, 2 bad config,
3 solver did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .config import (
    ConfigError,
    DomainBlock,
    ExpertBlock,
    FeatureBlock,
    ForwardSolverBlock,
    InverseSolverBlock,
    Lemma2Block,
    MdpBlock,
    UtilityBlock,
    load_config,
    section,
)
from .forward import solve_curl_frank_wolfe, uniform_policy
from .inverse import (
    InverseProblem,
    best_result,
    estimate_expert,
    expert_exploitability,
    invert_multistart,
    sample_dataset,
)
from .lemma2 import run_lemma2
from .mdp import MdpError, occupancy_from_policy, solve_mdp
from .rewards import FeatureMap, ParamReward, ThetaDomain
from .scenarios import (
    LayoutError,
    build_maritime,
    load_layout,
    port_arrival_probabilities,
    random_mdp,
    render_policy,
)
from .utilities import (
    Entropy,
    ImitationL2,
    KLToReference,
    Linear,
    LogBarrierConstrained,
    RewardMinusKL,
)

log = logging.getLogger("icurl")

EXIT_OK, EXIT_NOT_REPRODUCED, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2, 3

TOP_LEVEL_KEYS = {
    "solve-curl": {"mdp", "utility", "solver"},
    "invert": {"mdp", "expert", "features", "domain", "solver"},
    "eval-exploitability": {"mdp", "expert", "features", "theta", "tol", "eps"},
    "gen-dataset": {"mdp", "expert", "n", "seed"},
    "repro-lemma2": set(Lemma2Block.__dataclass_fields__),
}


class _Instance:
    """An MDP plus the reward table and gridworld spec it came with, if any."""

    def __init__(self, mdp, reward=None, spec=None):
        self.mdp, self.reward, self.spec = mdp, reward, spec


def build_instance(b: MdpBlock) -> _Instance:
    if b.source == "maritime":
        spec = load_layout(b.layout)
        overrides = {k: getattr(b, k) for k in ("slip", "gamma", "step_cost") if getattr(b, k) is not None}
        spec = replace(spec, **overrides)
        mdp, reward = build_maritime(spec)
        return _Instance(mdp, reward, spec)
    if b.source == "file":
        mdp, reward = io.load_mdp(b.path)
        return _Instance(mdp, reward)
    mdp = random_mdp(b.num_states, b.num_actions, b.branching, 0.9 if b.gamma is None else b.gamma, b.seed)
    reward = None
    if b.reward_seed is not None:
        reward = np.random.default_rng(b.reward_seed).uniform(size=mdp.shape)
    return _Instance(mdp, reward)


def _reward_table(source, inst: _Instance, name: str):
    if source == "mdp":
        if inst.reward is None:
            raise ConfigError(f"{name}: the MDP carries no reward table; give one inline or by path")
        return inst.reward
    return io.load_table(source, inst.mdp.shape, "reward")


def _reference(source, inst: _Instance):
    if source == "uniform_policy":
        return occupancy_from_policy(inst.mdp, uniform_policy(inst.mdp))
    return io.load_occupancy(source, inst.mdp.shape)


def build_utility(b: UtilityBlock, inst: _Instance):
    if b.kind == "entropy":
        return Entropy()
    if b.kind == "linear":
        return Linear(_reward_table(b.reward, inst, "utility.reward"))
    if b.kind == "kl_to_reference":
        return KLToReference(_reference(b.reference, inst), b.lam)
    if b.kind == "reward_minus_kl":
        return RewardMinusKL(_reward_table(b.reward, inst, "utility.reward"), _reference(b.reference, inst), b.lam)
    if b.kind == "imitation_l2":
        return ImitationL2(_reference(b.reference, inst))
    cost = io.load_table(b.cost, inst.mdp.shape, "cost")
    return LogBarrierConstrained(_reward_table(b.reward, inst, "utility.reward"), cost, b.budget, b.eta)


def build_expert_policy(policy, inst: _Instance):
    if policy == "uniform":
        return uniform_policy(inst.mdp)
    if policy == "optimal":
        pi, _, _ = solve_mdp(inst.mdp, _reward_table("mdp", inst, "expert.policy"), 1e-10)
        return pi
    pi = io.load_policy(policy, inst.mdp.shape)
    pi = np.clip(pi, 0.0, None)
    sums = pi.sum(axis=1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ConfigError("expert.policy rows must sum to 1")
    return pi / sums


def build_problem(b: ExpertBlock, inst: _Instance) -> InverseProblem:
    if b.dataset is not None:
        return estimate_expert(inst.mdp, io.read_dataset(b.dataset), mode=b.occupancy_mode)
    return InverseProblem.from_policy(inst.mdp, build_expert_policy(b.policy, inst))


def build_features(b: FeatureBlock, inst: _Instance) -> FeatureMap:
    mdp = inst.mdp
    if b.kind == "tabular_sa":
        return FeatureMap.tabular(mdp)
    if b.kind == "tabular_sa_plus_log_ratio":
        return FeatureMap.tabular_log_ratio(mdp, _reference(b.reference, inst), clamp=b.clamp)
    table = b.table
    if isinstance(table, str):
        table = io.read_json(table)
        table = table["table"] if isinstance(table, dict) else table
    return FeatureMap("custom_table", mdp.shape, table=np.asarray(table, dtype=float))


def build_domain(b: DomainBlock, dim: int) -> ThetaDomain:
    if b.anchor is None:
        return ThetaDomain(b.kind, b.bound, dim)
    target = float(b.anchor.get("target", 1.0))
    if "index" in b.anchor:
        idx = b.anchor["index"]
        if not isinstance(idx, int) or not 0 <= idx < dim:
            raise ConfigError(f"domain.anchor.index must be an integer in [0, {dim})")
        vec = np.zeros(dim)
        vec[idx] = 1.0
    else:
        vec = np.asarray(b.anchor["vector"], dtype=float)
    return ThetaDomain(b.kind, b.bound, dim, anchor=vec, anchor_target=target)


def _check_top_level(doc: dict, command: str):
    unknown = set(doc) - TOP_LEVEL_KEYS[command]
    if unknown:
        raise ConfigError(f"{command}: unknown config sections {sorted(unknown)}")


@contextmanager
def config_phase():
    """Anything that goes wrong while reading and building inputs is a config error."""
    try:
        yield
    except ConfigError:
        raise
    except (LayoutError, MdpError, ValueError, KeyError, TypeError, OSError) as e:
        raise ConfigError(str(e)) from e


# -- commands -----------------------------------------------------------------
# Each command validates and builds every input first, then solves, then writes.


def cmd_solve_curl(doc: dict, args) -> int:
    with config_phase():
        _check_top_level(doc, "solve-curl")
        mdp_b = section(doc, "mdp", MdpBlock)
        if args.seed is not None:
            mdp_b.seed = args.seed
        util_b = section(doc, "utility", UtilityBlock)
        solver = section(doc, "solver", ForwardSolverBlock)
        if args.max_iters is not None:
            solver.max_iters = args.max_iters
        if args.eps is not None:
            solver.tol = args.eps
        inst = build_instance(mdp_b)
        u = build_utility(util_b, inst)

    sol = solve_curl_frank_wolfe(inst.mdp, u, max_iters=solver.max_iters, tol=solver.tol, step=solver.step)
    result = {
        "config": {"mdp": asdict(mdp_b), "utility": asdict(util_b), "solver": asdict(solver)},
        "converged": sol.converged,
        "iterations": sol.iterations,
        "utility_value": sol.utility_value,
        "exploitability": sol.exploitability,
        "occupancy": sol.occupancy,
        "policy": sol.policy,
    }
    if inst.spec is not None:
        result["rendered_policy"] = render_policy(inst.spec, sol.policy).splitlines()
        result["port_probabilities"] = port_arrival_probabilities(inst.spec, inst.mdp, sol.policy)
    out = Path(args.out)
    io.write_trace_csv(out / "trace.csv", sol.trace)
    io.write_json(out / "solution.json", result)
    print(f"utility={sol.utility_value:.10g} exploitability={sol.exploitability:.3e} "
          f"iterations={sol.iterations} converged={sol.converged}")
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def cmd_invert(doc: dict, args) -> int:
    with config_phase():
        _check_top_level(doc, "invert")
        mdp_b = section(doc, "mdp", MdpBlock)
        expert_b = section(doc, "expert", ExpertBlock)
        feat_b = section(doc, "features", FeatureBlock)
        dom_b = section(doc, "domain", DomainBlock)
        solver = section(doc, "solver", InverseSolverBlock)
        if args.seed is not None:
            solver.seeds = [args.seed]
        if args.eps is not None:
            solver.eps = args.eps
        if args.max_iters is not None:
            solver.max_iters = args.max_iters
        inst = build_instance(mdp_b)
        problem = build_problem(expert_b, inst)
        features = build_features(feat_b, inst)
        domain = build_domain(dom_b, features.dim)

    results = invert_multistart(problem, features, domain, solver.eps, solver.max_iters, solver.seeds)
    best = best_result(results)
    doc_out = {
        "config": {
            "mdp": asdict(mdp_b), "expert": asdict(expert_b), "features": asdict(feat_b),
            "domain": asdict(dom_b), "solver": asdict(solver),
        },
        "provenance": problem.provenance,
        "best": _inversion_doc(best),
        "starts": [_inversion_doc(r) for r in results],
    }
    io.write_json(Path(args.out) / "inversion.json", doc_out)
    print(f"phi={best.final_exploitability:.3e} iterations={best.iterations} "
          f"converged={best.converged} seed={best.seed}")
    return EXIT_OK if best.converged else EXIT_NOT_CONVERGED


def _inversion_doc(r) -> dict:
    return {
        "seed": r.seed,
        "theta": r.theta,
        "final_exploitability": r.final_exploitability,
        "iterations": r.iterations,
        "converged": r.converged,
        "anchor_residual": r.anchor_residual,
        "trace": [{"phi": phi, "step": eta} for phi, eta in r.trace],
    }


def cmd_eval_exploitability(doc: dict, args) -> int:
    with config_phase():
        _check_top_level(doc, "eval-exploitability")
        mdp_b = section(doc, "mdp", MdpBlock)
        expert_b = section(doc, "expert", ExpertBlock)
        feat_b = section(doc, "features", FeatureBlock)
        if "theta" not in doc:
            raise ConfigError("eval-exploitability needs a 'theta' entry (inline list or path)")
        tol = doc.get("tol", 1e-8)
        eps = args.eps if args.eps is not None else doc.get("eps", 1e-3)
        inst = build_instance(mdp_b)
        problem = build_problem(expert_b, inst)
        features = build_features(feat_b, inst)
        theta = doc["theta"]
        if isinstance(theta, str):
            theta = io.read_json(theta)
            theta = theta["theta"] if isinstance(theta, dict) else theta
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (features.dim,):
            raise ConfigError(f"theta must have length {features.dim}")

    g, phi = expert_exploitability(problem, ParamReward(features, theta), tol)
    io.write_json(Path(args.out) / "exploitability.json", {
        "provenance": problem.provenance, "theta": theta, "exploitability": phi,
        "subgradient": g, "eps": eps, "feasible": phi <= eps,
    })
    print(f"phi={phi:.6e} feasible={phi <= eps}")
    return EXIT_OK


def cmd_gen_dataset(doc: dict, args) -> int:
    with config_phase():
        _check_top_level(doc, "gen-dataset")
        mdp_b = section(doc, "mdp", MdpBlock)
        expert_b = section(doc, "expert", ExpertBlock)
        if expert_b.policy is None:
            raise ConfigError("gen-dataset needs expert.policy")
        n = doc.get("n", 1000)
        if not isinstance(n, int) or n < 1:
            raise ConfigError("n must be a positive integer")
        seed = args.seed if args.seed is not None else doc.get("seed", 0)
        inst = build_instance(mdp_b)
        pi = build_expert_policy(expert_b.policy, inst)

    data = sample_dataset(inst.mdp, pi, n, seed)
    io.write_text(Path(args.out) / "dataset.csv", io.dataset_text(data))
    print(f"wrote {n} samples")
    return EXIT_OK


def cmd_repro_lemma2(doc: dict, args) -> int:
    with config_phase():
        _check_top_level(doc, "repro-lemma2")
        b = Lemma2Block.from_dict(doc)
        if args.eps is not None:
            b.eps = args.eps
        if args.max_iters is not None:
            b.max_iters = args.max_iters
        spec = load_layout(b.layout)
        overrides = {k: getattr(b, k) for k in ("slip", "gamma") if getattr(b, k) is not None}
        spec = replace(spec, **overrides)

    report = run_lemma2(spec, lam=b.lam, tol=b.tol, max_iters=b.max_iters, eps=b.eps)
    verdict = "excluded" if report.excluded else "NOT excluded"
    print(f"classical IRL: max advantage of the expert under r* = {report.max_advantage:.6g} "
          f"(r* {verdict} from the standard feasible set)")
    print(f"I-CURL: exploitability of the expert under the log-ratio reward = {report.phi:.3e} "
          f"({'feasible' if report.rationalized else 'NOT feasible'} at eps={b.eps:g})")
    if args.out is not None:
        io.write_json(Path(args.out) / "lemma2.json", {
            "config": asdict(b),
            "forward_converged": report.solution.converged,
            "forward_iterations": report.solution.iterations,
            "port_probabilities": report.ports,
            "max_advantage_visited": report.max_advantage,
            "max_advantage_all_states": report.max_advantage_all_states,
            "phi": report.phi,
            "theta": report.theta,
            "reproduced": report.reproduced,
            "rendered_policy": report.rendered.splitlines(),
        })
    return EXIT_OK if report.reproduced else EXIT_NOT_REPRODUCED


COMMANDS = {
    "solve-curl": cmd_solve_curl,
    "invert": cmd_invert,
    "eval-exploitability": cmd_eval_exploitability,
    "gen-dataset": cmd_gen_dataset,
    "repro-lemma2": cmd_repro_lemma2,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icurl", description="Concave-utility RL and its inverse.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, required=name != "repro-lemma2")
        p.add_argument("--out", default=None if name == "repro-lemma2" else "out")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eps", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with config_phase():
            doc = load_config(args.config)
        return COMMANDS[args.command](doc, args)
    except ConfigError as e:
        print(f"icurl {args.command}: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
