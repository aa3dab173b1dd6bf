"""Height histograms of greedy stacking episodes for cubes and CCS pools.

Example: python scripts/stacking_histogram.py --episodes 50 --sigma-place 0.05
"""

import argparse
from collections import Counter

from stackkit.planner import stacking_episode_heights
from stackkit.predictor import PREDICTOR_KINDS, PredictorFactory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--pool-size", type=int, default=12)
    ap.add_argument("--spheres", type=int, default=2)
    ap.add_argument("--predictor", choices=PREDICTOR_KINDS, default="oracle")
    ap.add_argument("--sigma-score", type=float, default=0.2)
    ap.add_argument("--model")
    ap.add_argument("--sigma-place", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    factory = PredictorFactory(args.predictor, args.sigma_score, args.model)
    for kind in ("cubes", "ccs"):
        heights = stacking_episode_heights(kind, args.pool_size, args.episodes, factory, args.seed,
                                           args.spheres, args.sigma_place, jobs=args.jobs)
        hist = Counter(heights)
        print(f"{kind} (mean {sum(heights) / len(heights):.2f})")
        for h in range(1, args.pool_size + 1):
            print(f"{h:>4} {hist[h]:>4} {'#' * hist[h]}".rstrip())


if __name__ == "__main__":
    main()
