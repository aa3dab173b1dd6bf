"""Top-down cumulative centre-of-mass stability check for single-stranded stacks.

A stack is stable iff, at every contact, the combined centre of mass of
everything above projects into the contact region. Degenerate contacts
(curved supports) cannot carry load; a single curved object resting on a
flat face at the very top is in neutral equilibrium and counts as stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .geometry import (
    TOL,
    ContactInterface,
    Disk,
    GeometryError,
    Orientation,
    PlacedObject,
    Point,
    Rect,
    SegmentX,
    Shape,
    contact_region,
    footprint,
    ground_contact,
    has_flat_top,
)

EPS_NEUTRAL = 1e-9
Z_TOL = 1e-7


class InvalidStack(ValueError):
    pass


@dataclass(frozen=True)
class Stack:
    """Objects ordered bottom-up; object 0 rests on the ground plane z=0."""

    objects: tuple[PlacedObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    @classmethod
    def build(cls, items: Iterable[tuple]) -> "Stack":
        """Stack ``(shape, orientation, x, y)`` items, deriving each ``z_base``."""
        objects = []
        z = 0.0
        for shape, orientation, x, y in items:
            obj = PlacedObject(shape, orientation, x, y, z)
            objects.append(obj)
            z = obj.z_top
        return cls(tuple(objects))

    def __len__(self):
        return len(self.objects)

    def __getitem__(self, i):
        return self.objects[i]

    @property
    def height(self) -> int:
        return len(self.objects)

    @property
    def top_z(self) -> float:
        return self.objects[-1].z_top if self.objects else 0.0

    def items(self) -> list[tuple]:
        return [(o.shape, o.orientation, o.x, o.y) for o in self.objects]

    def appended(self, shape: Shape, orientation: Orientation, x: float, y: float) -> "Stack":
        return Stack(self.objects + (PlacedObject(shape, orientation, x, y, self.top_z),))

    def translated(self, dx: float, dy: float, start: int = 0) -> "Stack":
        """Rigidly shift objects ``start..`` horizontally."""
        objs = list(self.objects)
        for i in range(start, len(objs)):
            objs[i] = objs[i].moved(x=objs[i].x + dx, y=objs[i].y + dy)
        return Stack(tuple(objs))

    def validate(self) -> list[ContactInterface]:
        """Check resting geometry and return the object-object contacts."""
        if not self.objects:
            raise InvalidStack("empty stack")
        if abs(self.objects[0].z_base) > Z_TOL:
            raise InvalidStack(f"object 0 does not rest on the ground (z_base={self.objects[0].z_base})")
        contacts = []
        for i in range(len(self.objects) - 1):
            try:
                contacts.append(contact_region(self.objects[i], self.objects[i + 1], i, Z_TOL))
            except GeometryError as exc:
                raise InvalidStack(f"interface {i}: {exc}") from exc
        return contacts


class ViolationType(str, Enum):
    VCOM = "VCOM"
    VPSF = "VPSF"


class Verdict(str, Enum):
    STABLE = "Stable"
    VCOM = "VCOM"
    VPSF = "VPSF"


@dataclass(frozen=True)
class InterfaceCheck:
    index: int  # -1 is the ground
    margin: float
    satisfied: bool
    degenerate: bool
    curved_support: bool


@dataclass(frozen=True)
class Violation:
    type: ViolationType
    violating_index: int
    first_to_fall_index: int


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    per_interface: tuple[InterfaceCheck, ...]
    ground: InterfaceCheck
    violation: Violation | None = None

    @property
    def failing(self) -> list[int]:
        out = [] if self.ground.satisfied else [-1]
        return out + [c.index for c in self.per_interface if not c.satisfied]


def _evaluate(contact: ContactInterface, px: float, py: float, margin: float, topmost: bool, eps: float) -> InterfaceCheck:
    if contact.planar:
        sd = contact.signed_distance(px, py)
        return InterfaceCheck(contact.lower_index, sd, sd >= margin, False, False)
    dist = contact.locus.distance(px, py)
    if contact.curved_support:
        ok = False
    elif topmost:
        ok = dist <= eps
    else:
        # a curved object carrying load fails at its own upper contact instead
        ok = True
    return InterfaceCheck(contact.lower_index, -dist, ok, True, contact.curved_support)


def check_stability(stack: Stack, margin: float = 0.0, eps_neutral: float = EPS_NEUTRAL) -> StabilityReport:
    """Evaluate every contact from the top down with incremental CoM accumulation."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    contacts = stack.validate()
    objs = stack.objects
    n = len(objs)
    checks: list[InterfaceCheck | None] = [None] * (n - 1)
    m_acc = sx = sy = 0.0
    for i in range(n - 2, -1, -1):
        upper = objs[i + 1]
        m = upper.mass
        m_acc += m
        sx += m * upper.x
        sy += m * upper.y
        checks[i] = _evaluate(contacts[i], sx / m_acc, sy / m_acc, margin, i + 1 == n - 1, eps_neutral)
    base = objs[0]
    m_acc += base.mass
    sx += base.mass * base.x
    sy += base.mass * base.y
    g = ground_contact(base)
    if g.planar:
        ground = InterfaceCheck(-1, math.inf, True, False, False)
    else:
        ground = _evaluate(g, sx / m_acc, sy / m_acc, margin, n == 1, eps_neutral)

    violation = None
    lowest = None
    if not ground.satisfied:
        lowest = ground
    else:
        lowest = next((c for c in checks if not c.satisfied), None)
    if lowest is not None:
        vtype = ViolationType.VPSF if lowest.degenerate else ViolationType.VCOM
        violation = Violation(vtype, lowest.index, lowest.index + 1)
    return StabilityReport(lowest is None, tuple(checks), ground, violation)


def is_stable(stack: Stack, margin: float = 0.0) -> bool:
    return check_stability(stack, margin).stable


def classify_violation(report: StabilityReport) -> Verdict:
    if report.violation is None:
        return Verdict.STABLE
    return Verdict(report.violation.type.value)


class Label(str, Enum):
    BASE = "base"
    TOP = "top"
    VIOLATING = "violating_object"
    FIRST_TO_FALL = "first_to_fall"
    OTHER = "other"


_LABEL_ORDER = {lab: k for k, lab in enumerate(Label)}

SegmentLabels = tuple[tuple[Label, ...], ...]


def annotate(stack: Stack, report: StabilityReport) -> SegmentLabels:
    """Per-object semantic labels; an object may carry several."""
    n = len(stack)
    sets: list[set[Label]] = [set() for _ in range(n)]
    sets[0].add(Label.BASE)
    sets[-1].add(Label.TOP)
    if report.violation is not None:
        v = report.violation
        if 0 <= v.violating_index < n:
            sets[v.violating_index].add(Label.VIOLATING)
        if 0 <= v.first_to_fall_index < n:
            sets[v.first_to_fall_index].add(Label.FIRST_TO_FALL)
    return tuple(
        tuple(sorted(s, key=_LABEL_ORDER.__getitem__)) if s else (Label.OTHER,) for s in sets
    )


# --- vectorised placement scan ------------------------------------------------


def _planar_sd(fp, x, y):
    if isinstance(fp, Rect):
        dx = np.abs(x - fp.cx) - fp.hx
        dy = np.abs(y - fp.cy) - fp.hy
        inside = -np.maximum(dx, dy)
        outside = -np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        return np.where((dx <= 0) & (dy <= 0), inside, outside)
    return fp.r - np.hypot(x - fp.cx, y - fp.cy)


def placement_stability_grid(
    stack: Stack,
    shape: Shape,
    orientation: Orientation,
    xs: np.ndarray,
    ys: np.ndarray,
    margin: float = 0.0,
) -> np.ndarray:
    """Ground-truth stability of ``stack`` plus one more object at each (x, y).

    Closed-form and vectorised over candidate positions; used for exhaustive
    grid certification of placement searches.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    contacts = stack.validate()
    objs = stack.objects
    n = len(objs)
    m_t = shape.mass
    ok = np.ones(np.broadcast(xs, ys).shape, dtype=bool)

    # existing contacts, now all carrying the new object as well
    m_above = 0.0
    sx = sy = 0.0
    for i in range(n - 2, -1, -1):
        upper = objs[i + 1]
        m_above += upper.mass
        sx += upper.mass * upper.x
        sy += upper.mass * upper.y
        c = contacts[i]
        if c.planar:
            px = (sx + m_t * xs) / (m_above + m_t)
            py = (sy + m_t * ys) / (m_above + m_t)
            ok &= np.minimum(_planar_sd(c.support, px, py), _planar_sd(c.contact, px, py)) >= margin
        elif c.curved_support:
            ok &= False
    # ground: a curved base always carries the new object, so only flat matters

    top = objs[-1]
    support = footprint(top.shape, top.orientation, top.x, top.y)
    if not has_flat_top(top.shape, top.orientation):
        return ok & False
    fp0 = footprint(shape, orientation, 0.0, 0.0)
    sd_support = _planar_sd(support, xs, ys)
    if isinstance(fp0, (Point, SegmentX)):
        # neutral equilibrium iff the centre sits over the support face
        return ok & (sd_support >= -TOL)
    # planar on planar: need overlap and own centroid inside the support face
    if isinstance(fp0, Rect) and isinstance(support, Rect):
        depth = np.minimum(
            fp0.hx + support.hx - np.abs(xs - support.cx),
            fp0.hy + support.hy - np.abs(ys - support.cy),
        )
    elif isinstance(fp0, Disk) and isinstance(support, Disk):
        depth = fp0.r + support.r - np.hypot(xs - support.cx, ys - support.cy)
    elif isinstance(fp0, Disk):
        depth = fp0.r + sd_support
    else:
        depth = support.r + _planar_sd(Rect(0.0, 0.0, fp0.hx, fp0.hy), support.cx - xs, support.cy - ys)
    own = min(fp0.hx, fp0.hy) if isinstance(fp0, Rect) else fp0.r
    return ok & (depth > TOL) & (np.minimum(sd_support, own) >= margin)


def grid_points(cx: float, cy: float, radius: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Lattice points of spacing ``step`` around (cx, cy) inside ``radius``."""
    k = int(math.floor(radius / step))
    offs = np.arange(-k, k + 1) * step
    gx, gy = np.meshgrid(offs, offs, indexing="ij")
    keep = gx * gx + gy * gy <= radius * radius + 1e-12
    return cx + gx[keep], cy + gy[keep]


def lowest_failing(report: StabilityReport) -> int | None:
    f = report.failing
    return f[0] if f else None


def count_failing(report: StabilityReport) -> int:
    return len(report.failing)


def margins(report: StabilityReport) -> list[float]:
    return [c.margin for c in report.per_interface]
