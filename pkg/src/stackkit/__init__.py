"""Analytic stability of single-stranded stacks of convex primitives.

Exact stability checking, annotated scenario generation, stackability
scoring and predictor-driven stacking and counterbalancing.
"""

__version__ = "0.1.0"

from .geometry import Orientation, PlacedObject, Shape, ShapeKind, contact_region, cumulative_com, region_contains
from .stability import Stack, StabilityReport, Verdict, ViolationType, annotate, check_stability, classify_violation

__all__ = [
    "Orientation",
    "PlacedObject",
    "Shape",
    "ShapeKind",
    "Stack",
    "StabilityReport",
    "Verdict",
    "ViolationType",
    "annotate",
    "check_stability",
    "classify_violation",
    "contact_region",
    "cumulative_com",
    "region_contains",
]
