"""Convex primitives, axis-aligned placements, and contact loci.

All lengths are dimensionless world units. Objects are placed with their
vertical axis along z; horizontal offsets give the position of the centroid
axis. Everything here is immutable and pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

TOL = 1e-9


class GeometryError(ValueError):
    pass


class NoContact(GeometryError):
    """The two loci that should touch are disjoint."""


class ShapeKind(str, Enum):
    CUBOID = "cuboid"
    CYLINDER = "cylinder"
    SPHERE = "sphere"


class Orientation(str, Enum):
    HEIGHT_A = "height_a"
    HEIGHT_B = "height_b"
    HEIGHT_C = "height_c"
    UPRIGHT = "upright"
    SIDEWAYS_X = "sideways_x"
    ONLY = "only"


ORIENTATIONS = {
    ShapeKind.CUBOID: (Orientation.HEIGHT_A, Orientation.HEIGHT_B, Orientation.HEIGHT_C),
    ShapeKind.CYLINDER: (Orientation.UPRIGHT, Orientation.SIDEWAYS_X),
    ShapeKind.SPHERE: (Orientation.ONLY,),
}

_N_DIMS = {ShapeKind.CUBOID: 3, ShapeKind.CYLINDER: 2, ShapeKind.SPHERE: 1}


@dataclass(frozen=True)
class Shape:
    """A homogeneous convex primitive.

    ``dims`` is ``(a, b, c)`` for a cuboid, ``(radius, height)`` for a
    cylinder and ``(radius,)`` for a sphere.
    """

    kind: ShapeKind
    dims: tuple[float, ...]
    density: float = 1.0

    def __post_init__(self):
        kind = ShapeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        dims = tuple(float(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "density", float(self.density))
        if len(dims) != _N_DIMS[kind]:
            raise GeometryError(f"{kind.value} needs {_N_DIMS[kind]} dims, got {len(dims)}")
        if not all(d > 0 and math.isfinite(d) for d in dims):
            raise GeometryError(f"dimensions must be strictly positive: {dims}")
        if not (self.density > 0 and math.isfinite(self.density)):
            raise GeometryError(f"density must be strictly positive: {self.density}")

    @classmethod
    def cuboid(cls, a, b, c, density=1.0):
        return cls(ShapeKind.CUBOID, (a, b, c), density)

    @classmethod
    def cube(cls, side, density=1.0):
        return cls(ShapeKind.CUBOID, (side, side, side), density)

    @classmethod
    def cylinder(cls, radius, height, density=1.0):
        return cls(ShapeKind.CYLINDER, (radius, height), density)

    @classmethod
    def sphere(cls, radius, density=1.0):
        return cls(ShapeKind.SPHERE, (radius,), density)

    @property
    def volume(self) -> float:
        if self.kind is ShapeKind.CUBOID:
            a, b, c = self.dims
            return a * b * c
        if self.kind is ShapeKind.CYLINDER:
            r, h = self.dims
            return math.pi * r * r * h
        (r,) = self.dims
        return 4.0 / 3.0 * math.pi * r**3

    @property
    def mass(self) -> float:
        return self.density * self.volume

    @property
    def orientations(self) -> tuple[Orientation, ...]:
        return ORIENTATIONS[self.kind]

    def is_cube(self) -> bool:
        return self.kind is ShapeKind.CUBOID and len(set(self.dims)) == 1

    def extents(self, orientation: Orientation) -> tuple[float, float, float]:
        """Axis-aligned (x, y, z) extents of the shape in ``orientation``."""
        orientation = Orientation(orientation)
        if orientation not in ORIENTATIONS[self.kind]:
            raise GeometryError(f"{orientation.value} is not valid for a {self.kind.value}")
        if self.kind is ShapeKind.CUBOID:
            a, b, c = self.dims
            if orientation is Orientation.HEIGHT_A:
                return (b, c, a)
            if orientation is Orientation.HEIGHT_B:
                return (a, c, b)
            return (a, b, c)
        if self.kind is ShapeKind.CYLINDER:
            r, h = self.dims
            if orientation is Orientation.UPRIGHT:
                return (2 * r, 2 * r, h)
            return (h, 2 * r, 2 * r)
        (r,) = self.dims
        return (2 * r, 2 * r, 2 * r)


def has_flat_top(shape: Shape, orientation: Orientation) -> bool:
    return shape.kind is ShapeKind.CUBOID or (
        shape.kind is ShapeKind.CYLINDER and Orientation(orientation) is Orientation.UPRIGHT
    )


# --- footprints -------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    cx: float
    cy: float
    hx: float
    hy: float

    @property
    def center(self):
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return 4.0 * self.hx * self.hy

    @property
    def circumradius(self) -> float:
        return math.hypot(self.hx, self.hy)

    @property
    def inradius(self) -> float:
        return min(self.hx, self.hy)

    def sd(self, x: float, y: float) -> float:
        """Signed distance to the boundary, positive inside."""
        dx = abs(x - self.cx) - self.hx
        dy = abs(y - self.cy) - self.hy
        if dx <= 0 and dy <= 0:
            return -max(dx, dy)
        return -math.hypot(max(dx, 0.0), max(dy, 0.0))

    def translated(self, dx, dy):
        return Rect(self.cx + dx, self.cy + dy, self.hx, self.hy)

    def shrunk(self, d):
        return Rect(self.cx, self.cy, self.hx - d, self.hy - d)


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float

    @property
    def center(self):
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return math.pi * self.r * self.r

    @property
    def circumradius(self) -> float:
        return self.r

    @property
    def inradius(self) -> float:
        return self.r

    def sd(self, x: float, y: float) -> float:
        return self.r - math.hypot(x - self.cx, y - self.cy)

    def translated(self, dx, dy):
        return Disk(self.cx + dx, self.cy + dy, self.r)

    def shrunk(self, d):
        return Disk(self.cx, self.cy, self.r - d)


@dataclass(frozen=True)
class Point:
    cx: float
    cy: float

    @property
    def center(self):
        return (self.cx, self.cy)

    area = 0.0
    circumradius = 0.0
    inradius = 0.0

    def distance(self, x: float, y: float) -> float:
        return math.hypot(x - self.cx, y - self.cy)

    def sd(self, x: float, y: float) -> float:
        return -self.distance(x, y)

    def translated(self, dx, dy):
        return Point(self.cx + dx, self.cy + dy)


@dataclass(frozen=True)
class SegmentX:
    """Line locus parallel to the x axis (a lying cylinder's contact line)."""

    cx: float
    cy: float
    half_length: float

    @property
    def center(self):
        return (self.cx, self.cy)

    area = 0.0
    inradius = 0.0

    @property
    def circumradius(self) -> float:
        return self.half_length

    def distance(self, x: float, y: float) -> float:
        dx = max(abs(x - self.cx) - self.half_length, 0.0)
        return math.hypot(dx, y - self.cy)

    def sd(self, x: float, y: float) -> float:
        return -self.distance(x, y)

    def translated(self, dx, dy):
        return SegmentX(self.cx + dx, self.cy + dy, self.half_length)


Footprint = Union[Rect, Disk, Point, SegmentX]


def is_planar(fp: Footprint) -> bool:
    return isinstance(fp, (Rect, Disk))


def footprint(shape: Shape, orientation: Orientation, x: float, y: float) -> Footprint:
    """Horizontal contact locus of a shape; identical for its top and bottom."""
    orientation = Orientation(orientation)
    if shape.kind is ShapeKind.CUBOID:
        ex, ey, _ = shape.extents(orientation)
        return Rect(x, y, ex / 2, ey / 2)
    if shape.kind is ShapeKind.CYLINDER:
        r, h = shape.dims
        if orientation is Orientation.UPRIGHT:
            return Disk(x, y, r)
        if orientation is Orientation.SIDEWAYS_X:
            return SegmentX(x, y, h / 2)
        raise GeometryError(f"{orientation.value} is not valid for a cylinder")
    if orientation is not Orientation.ONLY:
        raise GeometryError(f"{orientation.value} is not valid for a sphere")
    return Point(x, y)


def overlap_depth(a: Footprint, b: Footprint) -> float:
    """Penetration depth of two planar footprints; negative when apart.

    For rectangles this is the smaller of the two interval overlaps; for a
    disk it is the radial penetration.
    """
    if isinstance(a, Rect) and isinstance(b, Rect):
        ox = a.hx + b.hx - abs(a.cx - b.cx)
        oy = a.hy + b.hy - abs(a.cy - b.cy)
        return min(ox, oy, 2 * a.hx, 2 * b.hx, 2 * a.hy, 2 * b.hy)
    if isinstance(a, Disk) and isinstance(b, Disk):
        return min(a.r + b.r - math.hypot(a.cx - b.cx, a.cy - b.cy), 2 * a.r, 2 * b.r)
    if isinstance(a, Disk):
        a, b = b, a
    if isinstance(a, Rect) and isinstance(b, Disk):
        return min(b.r + a.sd(b.cx, b.cy), 2 * b.r, 2 * a.hx, 2 * a.hy)
    raise GeometryError("overlap_depth needs two planar footprints")


# --- placed objects ----------------------------------------------------------


@dataclass(frozen=True)
class PlacedObject:
    shape: Shape
    orientation: Orientation
    x: float
    y: float
    z_base: float = 0.0

    def __post_init__(self):
        orientation = Orientation(self.orientation)
        if orientation not in ORIENTATIONS[self.shape.kind]:
            raise GeometryError(f"{orientation.value} is not valid for a {self.shape.kind.value}")
        object.__setattr__(self, "orientation", orientation)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z_base", float(self.z_base))

    @property
    def offset(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def height(self) -> float:
        return self.shape.extents(self.orientation)[2]

    @property
    def z_top(self) -> float:
        return self.z_base + self.height

    @property
    def mass(self) -> float:
        return self.shape.mass

    @property
    def centroid(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z_base + self.height / 2)

    @property
    def flat_top(self) -> bool:
        return has_flat_top(self.shape, self.orientation)

    @property
    def flat_bottom(self) -> bool:
        return has_flat_top(self.shape, self.orientation)

    def moved(self, x=None, y=None, z_base=None) -> "PlacedObject":
        return PlacedObject(
            self.shape,
            self.orientation,
            self.x if x is None else x,
            self.y if y is None else y,
            self.z_base if z_base is None else z_base,
        )


def faces(obj: PlacedObject) -> tuple[Footprint, Footprint]:
    """(top, bottom) contact loci in world horizontal coordinates."""
    fp = footprint(obj.shape, obj.orientation, obj.x, obj.y)
    return fp, fp


# --- contact ----------------------------------------------------------------


@dataclass(frozen=True)
class ContactInterface:
    """Support between ``lower_index`` (or the ground, index -1) and the next object.

    ``locus`` is ``None`` for a planar contact, whose region is the
    intersection of ``support`` and ``contact``; otherwise it is the
    degenerate point/segment where the two bodies touch.
    """

    lower_index: int
    upper_index: int
    support: Footprint | None
    contact: Footprint
    plane_z: float
    locus: Footprint | None = None

    @property
    def planar(self) -> bool:
        return self.locus is None

    @property
    def curved_support(self) -> bool:
        return self.support is not None and not is_planar(self.support)

    def signed_distance(self, x: float, y: float) -> float:
        if self.locus is not None:
            return -self.locus.distance(x, y)
        if self.support is None:
            return math.inf
        return min(self.support.sd(x, y), self.contact.sd(x, y))

    def bounds(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounding box (xmin, xmax, ymin, ymax) of the region."""
        boxes = [self.locus] if self.locus is not None else [self.contact, self.support]
        xmin = ymin = -math.inf
        xmax = ymax = math.inf
        for fp in boxes:
            if fp is None:
                continue
            hx, hy = _half_box(fp)
            xmin, xmax = max(xmin, fp.cx - hx), min(xmax, fp.cx + hx)
            ymin, ymax = max(ymin, fp.cy - hy), min(ymax, fp.cy + hy)
        return xmin, xmax, ymin, ymax

    def translated(self, dx, dy) -> "ContactInterface":
        return ContactInterface(
            self.lower_index,
            self.upper_index,
            None if self.support is None else self.support.translated(dx, dy),
            self.contact.translated(dx, dy),
            self.plane_z,
            None if self.locus is None else self.locus.translated(dx, dy),
        )


def _half_box(fp: Footprint) -> tuple[float, float]:
    if isinstance(fp, Rect):
        return fp.hx, fp.hy
    if isinstance(fp, Disk):
        return fp.r, fp.r
    if isinstance(fp, SegmentX):
        return fp.half_length, 0.0
    return 0.0, 0.0


def _clip_segment(seg: SegmentX, lo: float, hi: float) -> SegmentX:
    a = max(seg.cx - seg.half_length, lo)
    b = min(seg.cx + seg.half_length, hi)
    if b < a - TOL:
        raise NoContact("segment misses footprint")
    b = max(a, b)
    return SegmentX((a + b) / 2, seg.cy, (b - a) / 2)


def _intersect_degenerate(a: Footprint, b: Footprint) -> Footprint:
    """Intersection of two loci where at least one is a point or a segment."""
    if isinstance(b, Point) and not isinstance(a, Point):
        a, b = b, a
    if isinstance(a, Point):
        if b.sd(a.cx, a.cy) < -TOL:
            raise NoContact("point locus outside footprint")
        return a
    if isinstance(b, SegmentX) and not isinstance(a, SegmentX):
        a, b = b, a
    # a is a segment now
    if isinstance(b, SegmentX):
        if abs(a.cy - b.cy) > TOL:
            raise NoContact("parallel segments do not touch")
        return _clip_segment(a, b.cx - b.half_length, b.cx + b.half_length)
    if isinstance(b, Rect):
        if abs(a.cy - b.cy) > b.hy + TOL:
            raise NoContact("segment misses rectangle")
        return _clip_segment(a, b.cx - b.hx, b.cx + b.hx)
    dy = abs(a.cy - b.cy)
    if dy > b.r + TOL:
        raise NoContact("segment misses disk")
    w = math.sqrt(max(b.r * b.r - dy * dy, 0.0))
    return _clip_segment(a, b.cx - w, b.cx + w)


def contact_region(
    lower: PlacedObject, upper: PlacedObject, lower_index: int = 0, tol: float = 1e-7
) -> ContactInterface:
    """Contact between ``upper`` resting on ``lower``."""
    if abs(upper.z_base - lower.z_top) > tol:
        raise GeometryError(
            f"upper object does not rest on lower: z_base {upper.z_base} vs top {lower.z_top}"
        )
    top, _ = faces(lower)
    _, bottom = faces(upper)
    if is_planar(top) and is_planar(bottom):
        if overlap_depth(top, bottom) <= TOL:
            raise NoContact("support footprints do not overlap")
        return ContactInterface(lower_index, lower_index + 1, top, bottom, lower.z_top)
    locus = _intersect_degenerate(top, bottom)
    return ContactInterface(lower_index, lower_index + 1, top, bottom, lower.z_top, locus)


def ground_contact(obj: PlacedObject) -> ContactInterface:
    """Contact of the base object with the infinite ground plane."""
    _, bottom = faces(obj)
    locus = None if is_planar(bottom) else bottom
    return ContactInterface(-1, 0, None, bottom, 0.0, locus)


def signed_distance(region: Footprint | ContactInterface, p: Sequence[float]) -> float:
    x, y = p
    return region.sd(x, y) if not isinstance(region, ContactInterface) else region.signed_distance(x, y)


def region_contains(region: Footprint | ContactInterface, p: Sequence[float], margin: float = 0.0) -> bool:
    """Whether ``p`` lies in ``region`` at least ``margin`` from its boundary.

    Degenerate regions (points, segments) contain ``p`` when it lies within
    ``margin`` of the locus.
    """
    x, y = p
    if isinstance(region, ContactInterface):
        if region.locus is not None:
            return region.locus.distance(x, y) <= margin
        return region.signed_distance(x, y) >= margin
    if isinstance(region, (Point, SegmentX)):
        return region.distance(x, y) <= margin
    return region.sd(x, y) >= margin


def cumulative_com(objects: Sequence[PlacedObject], from_index: int = 0) -> tuple[tuple[float, float, float], float]:
    """Mass-weighted centroid and total mass of ``objects[from_index:]``."""
    if not 0 <= from_index < len(objects):
        raise IndexError(f"from_index {from_index} out of range for {len(objects)} objects")
    m_tot = sx = sy = sz = 0.0
    for obj in objects[from_index:]:
        m = obj.mass
        cx, cy, cz = obj.centroid
        m_tot += m
        sx += m * cx
        sy += m * cy
        sz += m * cz
    return (sx / m_tot, sy / m_tot, sz / m_tot), m_tot
