"""Stackability: how well an object serves as a base for the rest of a pool.

Placements are searched with simulated annealing over horizontal offsets,
scored by any :class:`~stackkit.predictor.StabilityPredictor` evaluated on
the resting configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import Orientation, PlacedObject, Shape, footprint
from .stability import InvalidStack, Stack


class EmptyPool(ValueError):
    pass


@dataclass(frozen=True)
class AnnealingConfig:
    """Simulated annealing schedule for placement search.

    ``search_radius=None`` means the sum of the support and candidate
    footprint circumradii, which always contains every overlapping offset.
    ``global_prob`` is the chance that a proposal is drawn uniformly from the
    whole search disk instead of as a local Gaussian step; it helps on flat
    (0/1) score landscapes.
    """

    iterations: int = 64
    initial_temp: float = 1.0
    cooling: float = 0.92
    proposal_std: float = 0.1
    search_radius: float | None = None
    seed: int = 0
    restarts: int = 4
    global_prob: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.search_radius is not None and self.search_radius <= 0:
            raise ValueError("search_radius must be positive")
        if self.proposal_std <= 0 or self.initial_temp <= 0:
            raise ValueError("proposal_std and initial_temp must be positive")
        if not 0.0 <= self.global_prob <= 1.0:
            raise ValueError("global_prob must lie in [0, 1]")


def derive_seed(*parts: int) -> int:
    """Independent 32-bit stream id from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]).generate_state(1, np.uint32)[0])


def default_radius(stack: Stack, shape: Shape, orientation: Orientation) -> float:
    top = stack.objects[-1]
    a = footprint(top.shape, top.orientation, 0.0, 0.0)
    b = footprint(shape, orientation, 0.0, 0.0)
    return max(a.circumradius + b.circumradius, 1e-6)


def placement_score(stack: Stack, shape: Shape, orientation: Orientation, x: float, y: float, predictor) -> float:
    """Predictor score of ``stack`` with the candidate resting on top at (x, y).

    Placements that do not touch the top object score 0.
    """
    try:
        return float(predictor.predict(stack.appended(shape, orientation, x, y)))
    except InvalidStack:
        return 0.0


def anneal_on_stack(
    stack: Stack,
    shape: Shape,
    orientation: Orientation,
    predictor,
    cfg: AnnealingConfig = AnnealingConfig(),
    center: tuple[float, float] | None = None,
    max_score: float = 1.0,
) -> tuple[tuple[float, float], float]:
    """Best offset for a new object on top of ``stack`` and its score.

    The first restart starts at ``center`` (default: the top object's axis),
    further restarts start uniformly in the search disk. Returns the best
    state visited; stops early once ``max_score`` is reached.
    """
    top = stack.objects[-1]
    cx, cy = (top.x, top.y) if center is None else center
    radius = cfg.search_radius if cfg.search_radius is not None else default_radius(stack, shape, orientation)
    rng = np.random.default_rng(cfg.seed)

    def uniform_in_disk():
        r = radius * math.sqrt(rng.random())
        t = 2.0 * math.pi * rng.random()
        return cx + r * math.cos(t), cy + r * math.sin(t)

    best_xy, best = (cx, cy), -1.0
    for restart in range(cfg.restarts):
        x, y = (cx, cy) if restart == 0 else uniform_in_disk()
        s = placement_score(stack, shape, orientation, x, y, predictor)
        if s > best:
            best_xy, best = (x, y), s
        if best >= max_score:
            break
        for k in range(cfg.iterations):
            if cfg.global_prob > 0 and rng.random() < cfg.global_prob:
                nx, ny = uniform_in_disk()
            else:
                dx, dy = rng.normal(0.0, cfg.proposal_std, size=2)
                nx, ny = x + dx, y + dy
            if (nx - cx) ** 2 + (ny - cy) ** 2 > radius * radius:
                continue
            ns = placement_score(stack, shape, orientation, nx, ny, predictor)
            temp = cfg.initial_temp * cfg.cooling ** k
            if ns >= s or rng.random() < math.exp((ns - s) / temp):
                x, y, s = nx, ny, ns
            if ns > best:
                best_xy, best = (nx, ny), ns
            if best >= max_score:
                break
        if best >= max_score:
            break
    return best_xy, max(best, 0.0)


def anneal_placement(
    base: PlacedObject,
    top_shape: Shape,
    top_orientation: Orientation,
    predictor,
    cfg: AnnealingConfig = AnnealingConfig(),
    center: tuple[float, float] | None = None,
) -> tuple[tuple[float, float], float]:
    """Best offset of ``top_shape`` resting on ``base`` (which rests on the ground)."""
    return anneal_on_stack(Stack((base.moved(z_base=0.0),)), top_shape, top_orientation, predictor, cfg, center)


def support_area(shape: Shape, orientation: Orientation) -> float:
    """Area of the upward-facing support face (0 for curved tops)."""
    return footprint(shape, orientation, 0.0, 0.0).area


def best_top_orientation(base: PlacedObject, shape: Shape, predictor, cfg: AnnealingConfig, seed: int) -> Orientation:
    best_o, best = shape.orientations[0], -1.0
    for j, o in enumerate(shape.orientations):
        _, s = anneal_placement(base, shape, o, predictor, replace(cfg, seed=derive_seed(seed, j)))
        if s > best:
            best_o, best = o, s
    return best_o


def stackability_score(
    base_shape: Shape,
    base_orientation: Orientation,
    pool: Sequence[Shape],
    predictor,
    cfg: AnnealingConfig = AnnealingConfig(),
    perturbations: int = 4,
    origin: tuple[float, float] = (0.0, 0.0),
) -> float:
    """Mean, over perturbed base positions and pool objects, of the best placement score."""
    if not pool:
        raise EmptyPool("stackability needs at least one other object")
    if perturbations < 1:
        raise ValueError("perturbations must be >= 1")
    ox, oy = origin
    nominal = PlacedObject(base_shape, base_orientation, ox, oy, 0.0)
    tops = [(shape, best_top_orientation(nominal, shape, predictor, cfg, derive_seed(cfg.seed, 1, j)))
            for j, shape in enumerate(pool)]
    rng = np.random.default_rng(derive_seed(cfg.seed, 2))
    jitter = rng.normal(0.0, cfg.proposal_std, size=(perturbations, 2))
    total = 0.0
    for p in range(perturbations):
        base = nominal.moved(x=ox + float(jitter[p, 0]), y=oy + float(jitter[p, 1]))
        for j, (shape, o) in enumerate(tops):
            _, s = anneal_placement(base, shape, o, predictor, replace(cfg, seed=derive_seed(cfg.seed, 3, p, j)), (ox, oy))
            total += s
    return total / (perturbations * len(tops))


@dataclass(frozen=True)
class StackabilityResult:
    scores: dict[tuple[int, Orientation], float]
    best_orientation: tuple[Orientation, ...]
    best_score: tuple[float, ...]
    ranking: tuple[int, ...]

    def table(self, pool: Sequence[Shape]) -> list[tuple[int, str, str, float]]:
        return [(i, describe_shape(pool[i]), self.best_orientation[i].value, self.best_score[i]) for i in self.ranking]


def describe_shape(shape: Shape) -> str:
    dims = "x".join(f"{d:.3g}" for d in shape.dims)
    return f"{shape.kind.value}:{dims}"


def rank_pool(
    pool: Sequence[Shape],
    predictor,
    cfg: AnnealingConfig = AnnealingConfig(),
    perturbations: int = 4,
) -> StackabilityResult:
    """Score every (object, orientation) as a base and rank objects by their best score.

    Ties go to the larger support face, then to the lower pool index.
    """
    if len(pool) < 2:
        raise EmptyPool("ranking needs at least two objects")
    scores: dict[tuple[int, Orientation], float] = {}
    best_o, best_s = [], []
    for i, shape in enumerate(pool):
        others = [s for j, s in enumerate(pool) if j != i]
        cand = []
        for k, o in enumerate(shape.orientations):
            s = stackability_score(shape, o, others, predictor, replace(cfg, seed=derive_seed(cfg.seed, i, k)), perturbations)
            scores[(i, o)] = s
            cand.append((-s, -support_area(shape, o), k, o))
        _, _, _, o = min(cand)
        best_o.append(o)
        best_s.append(scores[(i, o)])
    ranking = sorted(range(len(pool)), key=lambda i: (-best_s[i], -support_area(pool[i], best_o[i]), i))
    return StackabilityResult(scores, tuple(best_o), tuple(best_s), tuple(ranking))
