"""Sweep the KL weight of the regularized captain on the maritime layout.

For each lambda, solve the regularized problem and roll the policy out to see
which port it ends in. The calibrated lambda is the smallest swept value at
which port B is reached with probability above one half.

    python3 scripts/calibrate_maritime_lambda.py --out tests/data/maritime_lambda_sweep.json
"""
import argparse
import json
import time

from icurl.forward import solve_curl_frank_wolfe
from icurl.lemma2 import captain_utility
from icurl.scenarios import build_maritime, load_layout, port_arrival_probabilities

LAMBDAS = (0.0, 0.03, 0.1, 0.3, 1.0)


def sweep(layout=None, lambdas=LAMBDAS, tol=1e-4, max_iters=20_000):
    spec = load_layout(layout)
    mdp, reward = build_maritime(spec)
    rows = []
    for lam in lambdas:
        t0 = time.perf_counter()
        sol = solve_curl_frank_wolfe(mdp, captain_utility(mdp, reward, lam), max_iters=max_iters,
                                     tol=tol, step="pairwise")
        ports = port_arrival_probabilities(spec, mdp, sol.policy)
        rows.append({"lam": lam, "converged": sol.converged, "iterations": sol.iterations,
                     "ports": {k: round(v, 6) for k, v in ports.items()}})
        print(f"lam={lam:<5g} B={ports['B']:.3f} A={ports['A']:.3f} C={ports['C']:.3f} "
              f"iters={sol.iterations} converged={sol.converged} ({time.perf_counter() - t0:.1f}s)")
    chosen = next((r["lam"] for r in rows if r["ports"]["B"] > 0.5), None)
    return {"layout": layout or "default", "tol": tol, "sweep": rows, "calibrated_lam": chosen}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layout", default=None)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--lam", type=float, nargs="*", default=list(LAMBDAS))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    result = sweep(args.layout, args.lam, args.tol)
    print(f"calibrated lambda: {result['calibrated_lam']}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(result, f, indent=2, sort_keys=True)
            f.write("\n")


if __name__ == "__main__":
    main()
