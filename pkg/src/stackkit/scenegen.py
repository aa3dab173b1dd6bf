"""Procedural generation of annotated stable / unstable stacking scenarios.

Stacks are assembled top-down: each new lower object is offset so the
combined centre of mass of everything above lands at least ``delta_gen``
inside its top face. Unstable scenarios then receive exactly one controlled
violation, either by sliding the upper substack off its support (VCOM) or by
inserting a curved object under a load (VPSF).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .geometry import (
    Disk,
    Orientation,
    PlacedObject,
    Rect,
    Shape,
    ShapeKind,
    footprint,
    overlap_depth,
)
from .stability import (
    InvalidStack,
    SegmentLabels,
    Stack,
    StabilityReport,
    ViolationType,
    annotate,
    check_stability,
)

N_BACKGROUNDS = 25
N_LIGHTS = 5
COLORS = ("red", "green", "blue", "yellow", "cyan", "magenta")
VIEWS_PER_SCENARIO = 16

# Scenario counts per flavor / split / stack height.
REFERENCE_COUNTS = {
    "ccs": {
        "train": {2: 1340, 3: 2464, 4: 1716, 5: 678, 6: 194},
        "val": {2: 286, 3: 528, 4: 368, 5: 144, 6: 40},
        "test": {2: 286, 3: 528, 4: 368, 5: 144, 6: 40},
    },
    "cubes": {
        "train": {2: 1680, 3: 1680, 4: 1558, 5: 1274, 6: 1030},
        "val": {2: 360, 3: 360, 4: 332, 5: 272, 6: 220},
        "test": {2: 360, 3: 360, 4: 332, 5: 272, 6: 220},
    },
}
SPLITS = ("train", "val", "test")


class InvalidSpec(ValueError):
    pass


class GenerationExhausted(RuntimeError):
    def __init__(self, spec, attempts):
        super().__init__(f"no scenario satisfying {spec} after {attempts} attempts")
        self.spec = spec
        self.attempts = attempts


class Flavor(str, Enum):
    CUBES = "cubes"
    CCS = "ccs"


class Target(str, Enum):
    STABLE = "stable"
    STABLE_COUNTERBALANCED = "stable_counterbalanced"
    UNSTABLE_VCOM = "unstable_vcom"
    UNSTABLE_VPSF = "unstable_vpsf"

    @property
    def unstable(self) -> bool:
        return self in (Target.UNSTABLE_VCOM, Target.UNSTABLE_VPSF)


@dataclass(frozen=True)
class ScenarioSpec:
    flavor: Flavor
    height: int
    target: Target
    violation_interface: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        object.__setattr__(self, "target", Target(self.target))
        if not 2 <= self.height <= 6:
            raise InvalidSpec(f"height must be in [2, 6], got {self.height}")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        vi = self.violation_interface
        if self.target.unstable:
            if vi is not None and not 0 <= vi <= self.height - 2:
                raise InvalidSpec(f"violation_interface {vi} outside [0, {self.height - 2}]")
        elif vi is not None:
            raise InvalidSpec("violation_interface is only meaningful for unstable targets")
        if self.flavor is Flavor.CUBES and self.target is Target.UNSTABLE_VPSF:
            raise InvalidSpec("cubes have no curved faces, so a VPSF violation is impossible")


@dataclass(frozen=True)
class Cosmetic:
    background_id: int
    object_colors: tuple[str, ...]
    light_id: int


@dataclass(frozen=True)
class Scenario:
    stack: Stack
    spec: ScenarioSpec
    report: StabilityReport
    labels: SegmentLabels
    cosmetic: Cosmetic
    fallback: bool = False


@dataclass(frozen=True)
class GenerationConfig:
    delta_gen: float = 0.05
    max_retries: int = 1000
    cube_side: tuple[float, float] = (0.3, 0.9)
    cuboid_edge: tuple[float, float] = (0.2, 1.2)
    cylinder_radius: tuple[float, float] = (0.1, 0.4)
    cylinder_height: tuple[float, float] = (0.3, 1.0)
    sphere_radius: tuple[float, float] = (0.15, 0.4)
    p_cylinder: float = 0.4
    min_contact_depth: float = 0.02
    vcom_scan_step: float = 0.01


# --- sampling primitives -----------------------------------------------------


def _u(rng, lo_hi):
    return float(rng.uniform(*lo_hi))


def sample_flat_object(rng: np.random.Generator, flavor: Flavor, cfg: GenerationConfig):
    """A shape and orientation that offers a planar top face."""
    if Flavor(flavor) is Flavor.CUBES:
        return Shape.cube(_u(rng, cfg.cube_side)), Orientation.HEIGHT_C
    if rng.random() < cfg.p_cylinder:
        return Shape.cylinder(_u(rng, cfg.cylinder_radius), _u(rng, cfg.cylinder_height)), Orientation.UPRIGHT
    shape = Shape.cuboid(_u(rng, cfg.cuboid_edge), _u(rng, cfg.cuboid_edge), _u(rng, cfg.cuboid_edge))
    return shape, shape.orientations[int(rng.integers(3))]


def sample_curved_object(rng: np.random.Generator, cfg: GenerationConfig):
    if rng.random() < 0.5:
        return Shape.sphere(_u(rng, cfg.sphere_radius)), Orientation.ONLY
    return Shape.cylinder(_u(rng, cfg.cylinder_radius), _u(rng, cfg.cylinder_height)), Orientation.SIDEWAYS_X


def _shrunk_template(shape, orientation, d):
    fp = footprint(shape, orientation, 0.0, 0.0)
    if isinstance(fp, Rect):
        if min(fp.hx, fp.hy) < d:
            raise _Retry
        return Rect(0.0, 0.0, fp.hx - d, fp.hy - d)
    if isinstance(fp, Disk):
        if fp.r < d:
            raise _Retry
        return Disk(0.0, 0.0, fp.r - d)
    raise ValueError("curved objects have no supporting face")


def _uniform_in(rng, fp):
    if isinstance(fp, Rect):
        return float(rng.uniform(-fp.hx, fp.hx)), float(rng.uniform(-fp.hy, fp.hy))
    r = fp.r * math.sqrt(rng.random())
    a = rng.uniform(0.0, 2 * math.pi)
    return r * math.cos(a), r * math.sin(a)


def _reach(fp, ux, uy):
    """Largest t with t*u inside the origin-centred footprint ``fp``."""
    if isinstance(fp, Disk):
        return fp.r
    tx = fp.hx / abs(ux) if abs(ux) > 1e-12 else math.inf
    ty = fp.hy / abs(uy) if abs(uy) > 1e-12 else math.inf
    return min(tx, ty)


class _Retry(Exception):
    pass


def _build_topdown(rng, parts, cfg, curved_at=None, pivot=None):
    """Offsets for ``parts`` (bottom-up list of (shape, orientation)).

    Every planar contact gets the CoM of the load above at least
    ``delta_gen`` inside. ``curved_at`` marks a curved object whose centre
    must sit on the faces above and below it. ``pivot`` requests that object
    ``pivot + 1`` overhang its support while its load counterbalances it.
    """
    d = cfg.delta_gen + 1e-9
    n = len(parts)
    offs = [None] * n
    offs[n - 1] = (0.0, 0.0)
    # the top object sits at the origin
    m_acc = parts[n - 1][0].mass
    sx = sy = 0.0
    for i in range(n - 2, -1, -1):
        shape, orient = parts[i]
        cx, cy = sx / m_acc, sy / m_acc
        if curved_at is not None and i == curved_at:
            # centre of the curved object must lie on the face above it
            ux, uy = _uniform_in(rng, _shrunk_template(*parts[i + 1], d))
            ax, ay = offs[i + 1]
            offs[i] = (ax + ux, ay + uy)
        elif pivot is not None and i == pivot + 1:
            a = rng.uniform(0.0, 2 * math.pi)
            ux, uy = math.cos(a), math.sin(a)
            t = rng.uniform(0.8, 1.0) * _reach(_shrunk_template(shape, orient, d), ux, uy)
            offs[i] = (cx - t * ux, cy - t * uy)
            pivot_dir = (ux, uy)
        elif pivot is not None and i == pivot:
            ux, uy = pivot_dir
            tmpl = _shrunk_template(shape, orient, d)
            for _ in range(20):
                t = rng.uniform(0.8, 1.0) * _reach(tmpl, ux, uy)
                ox, oy = cx + t * ux, cy + t * uy
                qx, qy = offs[i + 1]
                if footprint(shape, orient, ox, oy).sd(qx, qy) <= -cfg.delta_gen:
                    break
            else:
                raise _Retry
            offs[i] = (ox, oy)
        else:
            tmpl = _shrunk_template(shape, orient, d)
            need_q = curved_at is not None and i == curved_at - 1
            for _ in range(100):
                ux, uy = _uniform_in(rng, tmpl)
                ox, oy = cx - ux, cy - uy
                if not need_q:
                    break
                qx, qy = offs[i + 1]
                if footprint(shape, orient, ox, oy).sd(qx, qy) >= d:
                    break
            else:
                raise _Retry
            offs[i] = (ox, oy)
        m_i = shape.mass
        sx += m_i * offs[i][0]
        sy += m_i * offs[i][1]
        m_acc += m_i
    bx, by = offs[0]
    return Stack.build((s, o, x - bx, y - by) for (s, o), (x, y) in zip(parts, offs))


def _planar_margins_ok(report, delta, skip=None):
    for c in report.per_interface:
        if c.index == skip:
            continue
        if not c.satisfied:
            return False
        if not c.degenerate and c.margin < delta:
            return False
    return report.ground.satisfied


def _inject_vcom(rng, stack, k, cfg):
    a = rng.uniform(0.0, 2 * math.pi)
    ux, uy = math.cos(a), math.sin(a)
    feasible = []
    step = cfg.vcom_scan_step
    dist = step
    while dist < 10.0:
        cand = stack.translated(dist * ux, dist * uy, start=k + 1)
        try:
            rep = check_stability(cand)
        except InvalidStack:
            break
        lower, upper = cand[k], cand[k + 1]
        depth = overlap_depth(footprint(lower.shape, lower.orientation, lower.x, lower.y),
                              footprint(upper.shape, upper.orientation, upper.x, upper.y))
        c = rep.per_interface[k]
        if c.margin <= -cfg.delta_gen and depth >= cfg.min_contact_depth and _planar_margins_ok(rep, cfg.delta_gen, skip=k):
            feasible.append(cand)
        dist += step
    if not feasible:
        raise _Retry
    return feasible[int(rng.integers(len(feasible)))]


def _overhangs(stack, report):
    """Indices of objects whose own centroid is outside their own support region."""
    out = []
    contacts = stack.validate()
    for i, c in enumerate(contacts):
        up = stack[i + 1]
        if c.planar and c.signed_distance(up.x, up.y) < 0:
            out.append(i + 1)
    return out


def _attempt(rng, spec: ScenarioSpec, cfg: GenerationConfig):
    h = spec.height
    k = spec.violation_interface
    target = spec.target
    parts = [sample_flat_object(rng, spec.flavor, cfg) for _ in range(h)]
    if target is Target.UNSTABLE_VPSF:
        parts[k] = sample_curved_object(rng, cfg)
        stack = _build_topdown(rng, parts, cfg, curved_at=k)
    elif target is Target.STABLE_COUNTERBALANCED:
        pivot = int(rng.integers(h - 2))
        stack = _build_topdown(rng, parts, cfg, pivot=pivot)
    else:
        stack = _build_topdown(rng, parts, cfg)
    if target is Target.UNSTABLE_VCOM:
        stack = _inject_vcom(rng, stack, k, cfg)
    report = check_stability(stack)

    if target.unstable:
        want = ViolationType.VCOM if target is Target.UNSTABLE_VCOM else ViolationType.VPSF
        v = report.violation
        if v is None or v.type is not want or v.violating_index != k or report.failing != [k]:
            raise _Retry
        if not _planar_margins_ok(report, cfg.delta_gen, skip=k):
            raise _Retry
    else:
        if not report.stable or not _planar_margins_ok(report, cfg.delta_gen):
            raise _Retry
        if target is Target.STABLE_COUNTERBALANCED and not _overhangs(stack, report):
            raise _Retry
    return stack, report


def _cosmetic(rng, h):
    return Cosmetic(
        int(rng.integers(N_BACKGROUNDS)),
        tuple(COLORS[int(j)] for j in rng.integers(len(COLORS), size=h)),
        int(rng.integers(N_LIGHTS)),
    )


def generate(spec: ScenarioSpec, cfg: GenerationConfig | None = None) -> Scenario:
    """Generate one scenario whose ground-truth stability matches ``spec.target``."""
    cfg = cfg or GenerationConfig()
    rng = np.random.default_rng(spec.seed)
    if spec.target.unstable and spec.violation_interface is None:
        spec = replace(spec, violation_interface=int(rng.integers(spec.height - 1)))
    cosmetic = _cosmetic(rng, spec.height)

    fallback = False
    run_spec = spec
    if spec.target is Target.STABLE_COUNTERBALANCED and spec.height < 3:
        # nothing above the top object to counterbalance it
        run_spec = replace(spec, target=Target.STABLE)
        fallback = True
    for _ in range(cfg.max_retries):
        try:
            stack, report = _attempt(rng, run_spec, cfg)
            break
        except _Retry:
            continue
    else:
        if run_spec.target is not Target.STABLE_COUNTERBALANCED:
            raise GenerationExhausted(spec, cfg.max_retries)
        run_spec = replace(spec, target=Target.STABLE)
        fallback = True
        for _ in range(cfg.max_retries):
            try:
                stack, report = _attempt(rng, run_spec, cfg)
                break
            except _Retry:
                continue
        else:
            raise GenerationExhausted(spec, 2 * cfg.max_retries)
    return Scenario(stack, spec, report, annotate(stack, report), cosmetic, fallback)


def random_stack(rng: np.random.Generator, height: int, curved_prob: float = 0.2, spread: float = 0.35) -> Stack:
    """Unconstrained random single-stranded stack of mixed primitives.

    Offsets are jittered around the object below; only placements where the
    two bodies actually touch are kept.
    """
    from .geometry import NoContact, contact_region

    cfg = GenerationConfig()
    objs: list[PlacedObject] = []
    z = 0.0
    for i in range(height):
        if rng.random() < curved_prob:
            shape, orient = sample_curved_object(rng, cfg)
        else:
            shape, orient = sample_flat_object(rng, Flavor.CCS, cfg)
        if not objs:
            obj = PlacedObject(shape, orient, 0.0, 0.0, 0.0)
        else:
            lo = objs[-1]
            obj = None
            for _ in range(20):
                dx, dy = rng.normal(0.0, spread, size=2)
                cand = PlacedObject(shape, orient, lo.x + dx, lo.y + dy, z)
                try:
                    contact_region(lo, cand)
                except NoContact:
                    continue
                obj = cand
                break
            if obj is None:
                obj = PlacedObject(shape, orient, lo.x, lo.y, z)
        objs.append(obj)
        z = obj.z_top
    return Stack(tuple(objs))


# --- dataset planning ----------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    """Which scenarios to generate.

    Without ``counts`` the per-split / per-height counts are the reference
    table scaled by ``scale``. With ``counts`` (height -> total per flavor)
    totals are divided by ``split_fractions``.
    """

    flavors: tuple[str, ...] = ("ccs", "cubes")
    heights: tuple[int, ...] = (2, 3, 4, 5, 6)
    scale: float = 1.0
    counts: dict | None = None
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    master_seed: int = 0
    counterbalanced_every: int = 4
    target: str | None = None
    gen: GenerationConfig = field(default_factory=GenerationConfig)

    def to_dict(self) -> dict:
        return {
            "flavors": list(self.flavors),
            "heights": list(self.heights),
            "scale": float(self.scale),
            "counts": None if self.counts is None else {str(k): int(v) for k, v in sorted(self.counts.items())},
            "split_fractions": [float(f) for f in self.split_fractions],
            "master_seed": int(self.master_seed),
            "counterbalanced_every": int(self.counterbalanced_every),
            "target": self.target,
            "gen": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.gen.__dict__.items()
            },
        }


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_counts(config: DatasetConfig, flavor: str, height: int) -> dict[str, int]:
    if config.counts is None:
        return {s: round_half_up(REFERENCE_COUNTS[flavor][s][height] * config.scale) for s in SPLITS}
    total = int(config.counts.get(height, config.counts.get(str(height), 0)))
    f_train, f_val, _ = config.split_fractions
    n_train = round_half_up(total * f_train)
    n_val = round_half_up(total * f_val)
    return {"train": n_train, "val": n_val, "test": max(total - n_train - n_val, 0)}


def scenario_seed(master_seed: int, index: int) -> int:
    state = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class PlannedScenario:
    scenario_id: str
    split: str
    spec: ScenarioSpec


def plan_dataset(config: DatasetConfig) -> list[PlannedScenario]:
    """Assign targets and seeds to every scenario of the dataset.

    Within a (flavor, height) group scenarios alternate stable / unstable
    across train, val, test in that order, so the stable side gets any odd
    extra; unstable CCS scenarios alternate VCOM / VPSF over the flavor.
    """
    plan = []
    index = 0
    for flavor in config.flavors:
        flavor = Flavor(flavor).value
        n_stable = n_unstable = 0
        for h in config.heights:
            counts = split_counts(config, flavor, h)
            pos = 0
            for split in SPLITS:
                for _ in range(counts[split]):
                    if config.target is not None:
                        target = Target(config.target)
                    elif pos % 2 == 0:
                        cb = config.counterbalanced_every
                        target = Target.STABLE
                        if h >= 3 and cb > 0 and n_stable % cb == cb - 1:
                            target = Target.STABLE_COUNTERBALANCED
                        n_stable += 1
                    else:
                        if flavor == Flavor.CCS.value and n_unstable % 2 == 1:
                            target = Target.UNSTABLE_VPSF
                        else:
                            target = Target.UNSTABLE_VCOM
                        n_unstable += 1
                    pos += 1
                    spec = ScenarioSpec(flavor, h, target, None, scenario_seed(config.master_seed, index))
                    plan.append(PlannedScenario(f"{flavor}-h{h}-{index:06d}", split, spec))
                    index += 1
    return plan


def _generate_planned(args):
    planned, cfg = args
    return generate(planned.spec, cfg)


def generate_many(plan: Sequence[PlannedScenario], cfg: GenerationConfig, jobs: int = 1) -> list[Scenario]:
    if jobs <= 1:
        return [generate(p.spec, cfg) for p in plan]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_generate_planned, [(p, cfg) for p in plan], chunksize=8))


def generate_dataset(config: DatasetConfig, root=None, jobs: int = 1):
    """Generate every planned scenario; write scene files and manifest if ``root`` is given.

    Returns ``(manifest, scenarios)`` where ``scenarios`` maps scenario id to
    :class:`Scenario`.
    """
    from . import dataset_io

    plan = plan_dataset(config)
    scenarios = generate_many(plan, config.gen, jobs)
    by_id = {p.scenario_id: s for p, s in zip(plan, scenarios)}
    if root is not None:
        return dataset_io.write_dataset(root, config, plan, by_id), by_id
    return dataset_io.build_manifest(config, plan, by_id), by_id
