"""Sweep V-shaped scoring rules over garbling chains and print dominance verdicts.

With ``--n`` the sweep runs on a sample with cross-fit frequency estimates and
bootstrap tolerances; without it, on the exact distribution with oracle
posteriors.  ``--plot`` writes the per-kink series as JSON.
"""

import argparse
import json

from infoval import fixtures
from infoval.estimation import EstimatorSpec, OracleSpec
from infoval.robustness import MuGrid, dominance_matrix, sweep, total_order


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=0, help="sample size (0: exact distribution)")
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--bootstrap", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--plot", help="write plot data here")
    args = ap.parse_args()

    dgps = dict(fixtures.garbling_chains())
    dgps["z-channels"] = fixtures.z_channels()
    grid = MuGrid.from_step(args.step)
    plot = {}
    for name, dgp in dgps.items():
        sets = {s: [s] for s, r in zip(dgp.names, dgp.roles) if r == "signal"}
        if args.n:
            res = sweep(dgp.sample(args.n, seed=args.seed), sets, grid=grid, model=EstimatorSpec(seed=args.seed),
                        B=args.bootstrap, seed=args.seed)
            mat = dominance_matrix(res)
        else:
            res = sweep(dgp.to_dataset(), sets, grid=grid, model=OracleSpec(dgp))
            mat = dominance_matrix(res, 1e-9)
        print(f"\n{name}: total order {total_order(mat)}")
        for a in mat["names"]:
            print("  " + "  ".join(f"{a}>{b}:{mat['verdicts'][a][b]:<12}" for b in mat["names"] if b != a))
        plot[name] = {"mu": list(grid.values), "series": {k: v.tolist() for k, v in res.values.items()}}
    if args.plot:
        with open(args.plot, "w") as fh:
            json.dump(plot, fh, indent=1)


if __name__ == "__main__":
    main()
