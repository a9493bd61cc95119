"""Iterations needed by subgradient inversion as the tolerance shrinks.

Runs on the planted-reward instance (4 states, 3 actions, tabular features,
one anchored coordinate). Prints iterations per eps and per seed together with
the 1/eps^2 reference curve, and optionally writes the table as CSV.

The exact expert is optimal for a reward with a full-dimensional neighbourhood
of feasible parameters, so inversion finishes in a handful of steps. With
``--samples N`` the expert is estimated from N draws instead; the estimated
policy is stochastic, the feasible set thins out, and the iteration count
follows the nonsmooth 1/eps^2 regime.

    python3 scripts/inversion_scaling.py --eps 1e-1 1e-2 1e-3 --seeds 0 1 2
    python3 scripts/inversion_scaling.py --samples 5000 --eps 1e-1 3e-2 1e-2 3e-3
"""
import argparse
import csv
import sys
import time

import numpy as np

from icurl.inverse import InverseProblem, estimate_expert, invert_subgradient, sample_dataset
from icurl.rewards import FeatureMap, ThetaDomain
from icurl.scenarios import planted_reward_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--instance-seed", type=int, default=1)
    ap.add_argument("--max-iters", type=int, default=200_000)
    ap.add_argument("--samples", type=int, default=None, help="estimate the expert from this many draws")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    inst = planted_reward_instance(args.instance_seed)
    if args.samples is None:
        problem = InverseProblem.from_policy(inst.mdp, inst.expert_policy)
    else:
        problem = estimate_expert(inst.mdp, sample_dataset(inst.mdp, inst.expert_policy, args.samples, seed=7))
    j = inst.anchor_index
    domain = ThetaDomain.anchored_box(inst.theta_star.size, inst.bound, j, inst.theta_star[j])
    features = FeatureMap.tabular(inst.mdp)

    rows = []
    for eps in args.eps:
        iters = []
        t0 = time.perf_counter()
        for seed in args.seeds:
            res = invert_subgradient(problem, features, domain, eps, args.max_iters, seed)
            iters.append(res.iterations)
            rows.append({"eps": eps, "seed": seed, "iterations": res.iterations,
                         "converged": res.converged, "phi": res.final_exploitability})
        print(f"eps={eps:<8g} median iterations={np.median(iters):<8g} max={max(iters):<8d} "
              f"({time.perf_counter() - t0:.1f}s)")

    base = args.eps[0]
    base_med = np.median([r["iterations"] for r in rows if r["eps"] == base])
    for eps in args.eps[1:]:
        med = np.median([r["iterations"] for r in rows if r["eps"] == eps])
        print(f"eps {base:g} -> {eps:g}: iterations x{med / base_med:.1f}, 1/eps^2 predicts x{(base / eps) ** 2:.0f}")

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
