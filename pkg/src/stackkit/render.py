"""Orthographic SVG drawings of stacks (front, side and top views)."""

from __future__ import annotations

from typing import Sequence

from .geometry import Orientation, PlacedObject, ShapeKind
from .stability import Label, Stack

VIEWS = ("front", "side", "top")
SCALE = 100.0
PAD = 20.0
PALETTE = {
    "red": "#d62728", "green": "#2ca02c", "blue": "#1f77b4",
    "yellow": "#e6c619", "cyan": "#17becf", "magenta": "#c44ec4",
}
DEFAULT_FILL = "#9e9e9e"


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _projection(obj: PlacedObject, view: str):
    """('rect', x0, y0, w, h) or ('circle', cx, cy, r) in world units, y up."""
    ex, ey, ez = obj.shape.extents(obj.orientation)
    cx, cy, cz = obj.centroid
    kind = obj.shape.kind
    if view == "front":
        u, w, v, h = cx, ex, cz, ez
    elif view == "side":
        u, w, v, h = cy, ey, cz, ez
    else:
        u, w, v, h = cx, ex, cy, ey
    round_here = kind is ShapeKind.SPHERE or (
        kind is ShapeKind.CYLINDER
        and ((obj.orientation is Orientation.UPRIGHT and view == "top")
             or (obj.orientation is Orientation.SIDEWAYS_X and view == "side"))
    )
    if round_here:
        return ("circle", u, v, w / 2)
    return ("rect", u - w / 2, v - h / 2, w, h)


def render_svg(stack: Stack, view: str = "front", labels: Sequence[Sequence[Label]] | None = None,
               colors: Sequence[str] | None = None) -> str:
    """SVG text for one view; violating and first-to-fall objects get distinct outlines."""
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r} (choose from {', '.join(VIEWS)})")
    shapes = [_projection(o, view) for o in stack.objects]
    xs, ys = [], []
    for s in shapes:
        if s[0] == "circle":
            _, u, v, r = s
            xs += [u - r, u + r]
            ys += [v - r, v + r]
        else:
            _, x0, y0, w, h = s
            xs += [x0, x0 + w]
            ys += [y0, y0 + h]
    if view != "top":
        ys.append(0.0)
    xmin, xmax, ymin, ymax = min(xs), max(xs), min(ys), max(ys)
    width = (xmax - xmin) * SCALE + 2 * PAD
    height = (ymax - ymin) * SCALE + 2 * PAD

    def px(u):
        return (u - xmin) * SCALE + PAD

    def py(v):
        return (ymax - v) * SCALE + PAD

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}" data-view="{view}">',
        f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="#ffffff"/>',
    ]
    if view != "top":
        out.append(f'<line x1="0" y1="{_f(py(0.0))}" x2="{_f(width)}" y2="{_f(py(0.0))}" stroke="#444444" stroke-width="2"/>')
    for i in range(len(shapes)):
        labs = set(labels[i]) if labels is not None else set()
        fill = PALETTE.get(colors[i], colors[i]) if colors is not None else DEFAULT_FILL
        if Label.VIOLATING in labs:
            stroke = 'stroke="#000000" stroke-width="4" stroke-dasharray="8 4" class="violating"'
        elif Label.FIRST_TO_FALL in labs:
            stroke = 'stroke="#ff7f0e" stroke-width="3" stroke-dasharray="3 3" class="first-to-fall"'
        else:
            stroke = 'stroke="#333333" stroke-width="1"'
        s = shapes[i]
        if s[0] == "circle":
            _, u, v, r = s
            out.append(f'<circle data-index="{i}" cx="{_f(px(u))}" cy="{_f(py(v))}" r="{_f(r * SCALE)}" '
                       f'fill="{fill}" fill-opacity="0.85" {stroke}/>')
        else:
            _, x0, y0, w, h = s
            out.append(f'<rect data-index="{i}" x="{_f(px(x0))}" y="{_f(py(y0 + h))}" width="{_f(w * SCALE)}" '
                       f'height="{_f(h * SCALE)}" fill="{fill}" fill-opacity="0.85" {stroke}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_scenario(scenario, view: str = "front") -> str:
    return render_svg(scenario.stack, view, scenario.labels, scenario.cosmetic.object_colors)
