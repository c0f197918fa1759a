"""XOR complementarity: neither signal alone is worth anything, together they are.

    python3 scripts/xor_demo.py [--n 100000] [--seed 0]
"""

import argparse

from infoval import fixtures
from infoval.decision import PayoffFunction
from infoval.estimation import EstimatorSpec
from infoval.infovalue import aciv, information_value, shapley_aciv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dgp = fixtures.xor_dgp(with_agent=True)
    ds = dgp.sample(args.n, seed=args.seed)
    S = PayoffFunction.brier()
    spec = EstimatorSpec(seed=args.seed)

    print(f"{'quantity':<24}{'estimate':>10}{'exact':>10}")
    for V in (["s1"], ["s2"], ["s1", "s2"]):
        est = information_value(ds, S, V, spec).value
        exact = dgp.rational_payoff(S, V) - dgp.rational_payoff(S, [])
        print(f"{'IV(' + ','.join(V) + ')':<24}{est:>10.4f}{exact:>10.4f}")
    est = aciv(ds, S, ["s2"], ["a"], spec).value
    print(f"{'ACIV(s2 | agent a)':<24}{est:>10.4f}{dgp.aciv(S, ['s2'], ['a']):>10.4f}")
    res = shapley_aciv(ds, S, ["s1", "s2"], [], spec)
    for s, phi in res.scores.items():
        print(f"{'Shapley ' + s:<24}{phi:>10.4f}{0.125:>10.4f}")


if __name__ == "__main__":
    main()
