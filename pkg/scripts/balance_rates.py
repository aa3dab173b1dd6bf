"""Counterbalancing success rates per counterweight class.

Compares the exact oracle with the noisy oracle on the same random T towers.
"""

import argparse

from stackkit.planner import COUNTERWEIGHTS, balance_success_rates
from stackkit.predictor import PredictorFactory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--sigma-score", type=float, default=0.2)
    ap.add_argument("--sigma-place", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    runs = {
        "oracle": PredictorFactory("oracle"),
        f"noisy {args.sigma_score}": PredictorFactory("noisy", sigma_score=args.sigma_score),
    }
    print(f"{'predictor':<12} {'counterweight':<13} {'success':>8} {'feasible':>9} {'rate':>7} {'on feasible':>12}")
    for name, factory in runs.items():
        rates = balance_success_rates(COUNTERWEIGHTS, args.episodes, factory, args.seed,
                                      placement_noise=args.sigma_place)
        for kind, r in rates.items():
            print(f"{name:<12} {kind:<13} {r['success']:>8} {r['feasible']:>9} {100 * r['rate']:>6.1f}% "
                  f"{100 * r['rate_on_feasible']:>11.1f}%")


if __name__ == "__main__":
    main()
