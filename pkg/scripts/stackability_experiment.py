"""Stackability score against support area for random objects of each class.

Prints one row per (object, orientation) base: class, support area and the
oracle stackability score against a shared random pool.
"""

import argparse

import numpy as np

from stackkit.geometry import Orientation, Shape
from stackkit.predictor import OraclePredictor
from stackkit.stackability import AnnealingConfig, derive_seed, stackability_score, support_area


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--objects", type=int, default=8, help="objects per class")
    ap.add_argument("--pool", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    pool = [Shape.cuboid(*rng.uniform(0.2, 0.6, size=3)) for _ in range(args.pool)]
    bases = []
    for _ in range(args.objects):
        a, b, c = rng.uniform(0.2, 1.0, size=3)
        bases.append(("cuboid", Shape.cuboid(a, b, c), Orientation.HEIGHT_C))
        r, h = rng.uniform(0.15, 0.5), rng.uniform(0.2, 1.0)
        bases.append(("upright cylinder", Shape.cylinder(r, h), Orientation.UPRIGHT))
        bases.append(("lying cylinder", Shape.cylinder(r, h), Orientation.SIDEWAYS_X))
        bases.append(("sphere", Shape.sphere(rng.uniform(0.15, 0.5)), Orientation.ONLY))
    # projected area onto the ground plane, as in the classic scatter plot
    print(f"{'class':<17} {'projected area':>14} {'score':>6}")
    for k, (name, shape, o) in enumerate(bases):
        ex, ey, _ = shape.extents(o)
        area = ex * ey if shape.kind.value == "cuboid" or o is Orientation.SIDEWAYS_X else np.pi * (ex / 2) ** 2
        s = stackability_score(shape, o, pool, OraclePredictor(), AnnealingConfig(seed=derive_seed(args.seed, k)))
        print(f"{name:<17} {area:>14.3f} {s:>6.3f}   (support face {support_area(shape, o):.3f})")


if __name__ == "__main__":
    main()
