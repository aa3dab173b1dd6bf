"""Greedy tower building and counterbalancing driven by a stability predictor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import Orientation, PlacedObject, Shape
from .stability import InvalidStack, Stack, ViolationType, check_stability, grid_points, placement_stability_grid
from .stackability import AnnealingConfig, anneal_on_stack, default_radius, derive_seed, describe_shape, rank_pool

ACCEPT_THRESHOLD = 0.5
# counterweight regions can be thin strips, so balancing searches harder
BALANCE_CONFIG = AnnealingConfig(iterations=128, restarts=16, global_prob=0.5)


class PreconditionError(ValueError):
    pass


# --- stacking -------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    object_index: int
    orientation: Orientation
    proposed: tuple[float, float]
    committed: tuple[float, float] | None
    spawn_z: float
    score: float
    outcome: str  # "placed", "accepted", "skipped" or "collapse"


@dataclass
class StackingEpisode:
    pool: list[Shape]
    predictor: object
    cfg: AnnealingConfig = field(default_factory=AnnealingConfig)
    spawn_height: float = 0.5
    placement_noise: float = 0.0
    seed: int = 0
    perturbations: int = 4
    log: list[StepRecord] = field(default_factory=list)
    stack: Stack | None = None
    collapsed: bool = False

    @property
    def height(self) -> int:
        return sum(r.outcome in ("placed", "accepted") for r in self.log)


def run_stacking(episode: StackingEpisode) -> StackingEpisode:
    """Rank the pool, then greedily place objects until collapse or exhaustion."""
    pool = list(episode.pool)
    if not pool:
        raise PreconditionError("stacking needs a nonempty pool")
    pred = episode.predictor
    rng = np.random.default_rng(derive_seed(episode.seed, 0))
    if len(pool) >= 2:
        ranked = rank_pool(pool, pred, replace(episode.cfg, seed=derive_seed(episode.seed, 1)), episode.perturbations)
        order, orients = ranked.ranking, ranked.best_orientation
    else:
        order, orients = (0,), (pool[0].orientations[0],)

    episode.log = []
    episode.collapsed = False
    first = order[0]
    stack = Stack((PlacedObject(pool[first], orients[first], 0.0, 0.0, 0.0),))
    episode.log.append(StepRecord(first, orients[first], (0.0, 0.0), (0.0, 0.0), episode.spawn_height, 1.0, "placed"))
    for step, i in enumerate(order[1:], start=1):
        shape, o = pool[i], orients[i]
        spawn_z = stack.top_z + episode.spawn_height
        cfg = replace(episode.cfg, seed=derive_seed(episode.seed, 2, step))
        (x, y), score = anneal_on_stack(stack, shape, o, pred, cfg)
        if score < ACCEPT_THRESHOLD:
            episode.log.append(StepRecord(i, o, (x, y), None, spawn_z, score, "skipped"))
            continue
        if episode.placement_noise > 0:
            dx, dy = rng.normal(0.0, episode.placement_noise, size=2)
            cx, cy = x + float(dx), y + float(dy)
        else:
            cx, cy = x, y
        cand = stack.appended(shape, o, cx, cy)
        try:
            ok = check_stability(cand).stable
        except InvalidStack:
            ok = False
        if not ok:
            episode.log.append(StepRecord(i, o, (x, y), (cx, cy), spawn_z, score, "collapse"))
            episode.collapsed = True
            break
        stack = cand
        episode.log.append(StepRecord(i, o, (x, y), (cx, cy), spawn_z, score, "accepted"))
    episode.stack = stack
    return episode


def replay(pool: Sequence[Shape], log: Sequence[StepRecord]) -> list[str]:
    """Re-execute the committed placements of a log and recompute each outcome."""
    outcomes = []
    stack: Stack | None = None
    for r in log:
        if r.outcome == "skipped" or r.committed is None:
            outcomes.append("skipped")
            continue
        x, y = r.committed
        if stack is None:
            stack = Stack((PlacedObject(pool[r.object_index], r.orientation, x, y, 0.0),))
            outcomes.append("placed")
            continue
        cand = stack.appended(pool[r.object_index], r.orientation, x, y)
        try:
            ok = check_stability(cand).stable
        except InvalidStack:
            ok = False
        if not ok:
            outcomes.append("collapse")
            break
        stack = cand
        outcomes.append("accepted")
    return outcomes


def episode_to_dict(ep: StackingEpisode) -> dict:
    return {
        "pool": [{"kind": s.kind.value, "dims": list(s.dims), "density": s.density} for s in ep.pool],
        "seed": int(ep.seed),
        "spawn_height": float(ep.spawn_height),
        "placement_noise": float(ep.placement_noise),
        "height": ep.height,
        "collapsed": ep.collapsed,
        "log": [
            {
                "object_index": r.object_index,
                "object": describe_shape(ep.pool[r.object_index]),
                "orientation": r.orientation.value,
                "proposed": [float(v) for v in r.proposed],
                "committed": None if r.committed is None else [float(v) for v in r.committed],
                "spawn_z": float(r.spawn_z),
                "score": float(r.score),
                "outcome": r.outcome,
            }
            for r in ep.log
        ],
    }


def log_from_dict(d: dict) -> tuple[list[Shape], list[StepRecord]]:
    pool = [Shape(p["kind"], p["dims"], p["density"]) for p in d["pool"]]
    log = [
        StepRecord(r["object_index"], Orientation(r["orientation"]), tuple(r["proposed"]),
                   None if r["committed"] is None else tuple(r["committed"]), r["spawn_z"], r["score"], r["outcome"])
        for r in d["log"]
    ]
    return pool, log


def sample_pool(kind: str, n: int, rng: np.random.Generator, spheres: int = 2) -> list[Shape]:
    """Random object pool: ``cubes`` or ``ccs`` (cuboids, cylinders, ``spheres`` spheres)."""
    from .scenegen import Flavor, GenerationConfig, sample_flat_object

    g = GenerationConfig()
    if kind == "cubes":
        return [sample_flat_object(rng, Flavor.CUBES, g)[0] for _ in range(n)]
    if kind != "ccs":
        raise ValueError(f"unknown pool kind {kind!r}")
    if not 0 <= spheres <= n:
        raise ValueError("spheres must lie in [0, n]")
    shapes = [sample_flat_object(rng, Flavor.CCS, g)[0] for _ in range(n - spheres)]
    shapes += [Shape.sphere(float(rng.uniform(*g.sphere_radius))) for _ in range(spheres)]
    perm = rng.permutation(n)
    return [shapes[k] for k in perm]


def stacking_episode_heights(kind: str, n: int, episodes: int, predictor_factory, seed: int = 0,
                             spheres: int = 2, placement_noise: float = 0.0,
                             cfg: AnnealingConfig = AnnealingConfig(), jobs: int = 1) -> list[int]:
    """Heights reached by ``episodes`` independent seeded episodes."""
    args = [(kind, n, predictor_factory, derive_seed(seed, e), spheres, placement_noise, cfg) for e in range(episodes)]
    if jobs <= 1:
        return [_episode_height(a) for a in args]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_episode_height, args))


def _episode_height(args) -> int:
    kind, n, predictor_factory, s, spheres, noise, cfg = args
    rng = np.random.default_rng(s)
    pool = sample_pool(kind, n, rng, spheres)
    ep = StackingEpisode(pool, predictor_factory(s), cfg, placement_noise=noise, seed=s)
    return run_stacking(ep).height


# --- counterbalancing -------------------------------------------------------------


@dataclass
class BalanceTask:
    frozen_stack: Stack
    counterweight: Shape
    orientation: Orientation | None = None
    offset: tuple[float, float] | None = None
    score: float | None = None
    success: bool | None = None
    feasible: bool | None = None

    @property
    def infeasible(self) -> bool:
        return self.feasible is False


def balance_radius(stack: Stack, shape: Shape, orientation: Orientation) -> float:
    return default_radius(stack, shape, orientation)


def certify_feasible(stack: Stack, shape: Shape, orientation: Orientation, step: float = 0.02) -> bool:
    """Exhaustive grid search with the exact checker over the top face neighbourhood."""
    top = stack.objects[-1]
    xs, ys = grid_points(top.x, top.y, balance_radius(stack, shape, orientation), step)
    return bool(placement_stability_grid(stack, shape, orientation, xs, ys).any())


def run_balance(task: BalanceTask, predictor, cfg: AnnealingConfig = BALANCE_CONFIG,
                placement_noise: float = 0.0, seed: int = 0, grid_step: float = 0.02) -> BalanceTask:
    """Place the counterweight on the frozen tower's top face to stabilise it.

    The search maximises the predictor score of the whole unfrozen stack; the
    committed placement is judged by the exact checker. Feasibility is always
    certified by an exhaustive grid search so failures can be told apart from
    impossible tasks.
    """
    report = check_stability(task.frozen_stack)
    if report.stable:
        raise PreconditionError("frozen stack is already stable")
    if report.violation.type is not ViolationType.VCOM:
        raise PreconditionError("balancing needs a centre-of-mass violation")
    stack = task.frozen_stack
    orients = [task.orientation] if task.orientation is not None else list(task.counterweight.orientations)
    best = None
    for k, o in enumerate(orients):
        (x, y), s = anneal_on_stack(stack, task.counterweight, o, predictor, replace(cfg, seed=derive_seed(seed, k)))
        if best is None or s > best[2]:
            best = (o, (x, y), s)
    o, (x, y), s = best
    if placement_noise > 0:
        dx, dy = np.random.default_rng(derive_seed(seed, 99)).normal(0.0, placement_noise, size=2)
        x, y = x + float(dx), y + float(dy)
    try:
        ok = check_stability(stack.appended(task.counterweight, o, x, y)).stable
    except InvalidStack:
        ok = False
    task.orientation, task.offset, task.score, task.success = o, (x, y), s, ok
    task.feasible = ok or any(certify_feasible(stack, task.counterweight, oo, grid_step) for oo in orients)
    return task


def hand_t_task() -> BalanceTask:
    """Unit cube base over x in [0, 1], a 2 x 1 x 0.5 slab centred at x=1.5, and a 2 x 1 x 1 counterweight."""
    base = Shape.cube(1.0)
    slab = Shape.cuboid(2.0, 1.0, 0.5)
    stack = Stack.build([(base, Orientation.HEIGHT_C, 0.5, 0.0), (slab, Orientation.HEIGHT_C, 1.5, 0.0)])
    return BalanceTask(stack, Shape.cuboid(2.0, 1.0, 1.0), Orientation.HEIGHT_C)


def task_scenario(task: BalanceTask, seed: int = 0):
    """Wrap a frozen tower as an annotated scenario so it can be saved as a scene file."""
    from .scenegen import Cosmetic, Scenario, ScenarioSpec
    from .stability import annotate

    stack = task.frozen_stack
    report = check_stability(stack)
    spec = ScenarioSpec("ccs", len(stack), "unstable_vcom", report.violation.violating_index, seed)
    colors = tuple(("red", "blue", "green", "yellow", "cyan", "magenta")[k % 6] for k in range(len(stack)))
    return Scenario(stack, spec, report, annotate(stack, report), Cosmetic(0, colors, 0))


COUNTERWEIGHTS = ("cube", "cuboid", "cylinder", "sphere")


def sample_counterweight(kind: str, rng: np.random.Generator) -> tuple[Shape, Orientation]:
    if kind == "cube":
        return Shape.cube(float(rng.uniform(0.5, 1.0))), Orientation.HEIGHT_C
    if kind == "cuboid":
        return Shape.cuboid(float(rng.uniform(0.8, 1.6)), float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.4, 1.0))), Orientation.HEIGHT_C
    if kind == "cylinder":
        return Shape.cylinder(float(rng.uniform(0.3, 0.5)), float(rng.uniform(0.5, 1.0))), Orientation.UPRIGHT
    if kind == "sphere":
        return Shape.sphere(float(rng.uniform(0.35, 0.55))), Orientation.ONLY
    raise ValueError(f"unknown counterweight kind {kind!r}")


def make_t_task(rng: np.random.Generator, kind: str) -> BalanceTask:
    """Random "unstable T": a slab overhanging a cube base far enough to tip, plus a counterweight."""
    side = float(rng.uniform(0.6, 1.0))
    length = float(rng.uniform(1.6, 2.4))
    width = float(rng.uniform(0.6, 1.0))
    thick = float(rng.uniform(0.2, 0.5))
    # slab centre beyond the base edge, but the slab still rests on the base
    excess = float(rng.uniform(0.05, 0.2)) * length
    cx = side / 2 + min(excess, length / 2 - 0.1)
    stack = Stack.build([
        (Shape.cube(side), Orientation.HEIGHT_C, 0.0, 0.0),
        (Shape.cuboid(length, width, thick), Orientation.HEIGHT_C, cx, 0.0),
    ])
    shape, orient = sample_counterweight(kind, rng)
    return BalanceTask(stack, shape, orient)


def balance_success_rates(kinds: Sequence[str], episodes: int, predictor_factory, seed: int = 0,
                          cfg: AnnealingConfig = BALANCE_CONFIG, placement_noise: float = 0.0) -> dict:
    """Per counterweight class: success counts on all tasks and on grid-feasible tasks."""
    out = {}
    for c, kind in enumerate(kinds):
        rng = np.random.default_rng(derive_seed(seed, c))
        n_ok = n_feasible = n_ok_feasible = 0
        for e in range(episodes):
            task = make_t_task(rng, kind)
            s = derive_seed(seed, c, e)
            run_balance(task, predictor_factory(s), cfg, placement_noise, s)
            n_ok += task.success
            n_feasible += task.feasible
            n_ok_feasible += task.success and task.feasible
        out[kind] = {
            "episodes": episodes,
            "success": n_ok,
            "feasible": n_feasible,
            "success_on_feasible": n_ok_feasible,
            "rate": n_ok / episodes,
            "rate_on_feasible": n_ok_feasible / n_feasible if n_feasible else math.nan,
        }
    return out

