"""Scene files, dataset manifests and split loading.

Everything is written as canonical JSON: sorted keys, two-space indent, and
floats with 17 significant digits so values survive a round trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

from .geometry import Orientation, PlacedObject, Shape
from .scenegen import (
    VIEWS_PER_SCENARIO,
    Cosmetic,
    DatasetConfig,
    PlannedScenario,
    Scenario,
    ScenarioSpec,
    SPLITS,
)
from .stability import InvalidStack, Label, Stack, annotate, check_stability

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest"


class SchemaError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class IoError(OSError):
    pass


class HashMismatch(ValueError):
    pass


# --- canonical text ------------------------------------------------------------


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite number {x!r}")
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _emit(v, indent, out):
    pad = "  " * indent
    if v is None:
        out.append("null")
    elif isinstance(v, bool):
        out.append("true" if v else "false")
    elif isinstance(v, int):
        out.append(str(v))
    elif isinstance(v, float):
        out.append(format_float(v))
    elif isinstance(v, str):
        out.append(json.dumps(v))
    elif isinstance(v, (list, tuple)):
        if not v:
            out.append("[]")
        elif all(not isinstance(e, (dict, list, tuple)) for e in v):
            out.append("[")
            for k, e in enumerate(v):
                if k:
                    out.append(", ")
                _emit(e, 0, out)
            out.append("]")
        else:
            out.append("[\n")
            for k, e in enumerate(v):
                out.append(pad + "  ")
                _emit(e, indent + 1, out)
                out.append(",\n" if k < len(v) - 1 else "\n")
            out.append(pad + "]")
    elif isinstance(v, dict):
        if not v:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(v, key=str)
        for k, key in enumerate(keys):
            out.append(pad + "  " + json.dumps(str(key)) + ": ")
            _emit(v[key], indent + 1, out)
            out.append(",\n" if k < len(keys) - 1 else "\n")
        out.append(pad + "}")
    else:
        raise TypeError(f"cannot serialise {type(v).__name__}")


def canonical_dumps(obj) -> str:
    out: list[str] = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- scenes -------------------------------------------------------------------


def scene_to_dict(scenario: Scenario) -> dict:
    spec = scenario.spec
    v = scenario.report.violation
    return {
        "schema_version": SCHEMA_VERSION,
        "spec": {
            "flavor": spec.flavor.value,
            "height": spec.height,
            "target": spec.target.value,
            "violation_interface": spec.violation_interface,
            "seed": spec.seed,
        },
        "objects": [
            {
                "kind": o.shape.kind.value,
                "dims": list(o.shape.dims),
                "density": o.shape.density,
                "orientation": o.orientation.value,
                "offset_x": o.x,
                "offset_y": o.y,
                "z_base": o.z_base,
            }
            for o in scenario.stack.objects
        ],
        "annotations": {
            "stable": scenario.report.stable,
            "violation_type": None if v is None else v.type.value,
            "violating_index": None if v is None else v.violating_index,
            "first_to_fall": None if v is None else v.first_to_fall_index,
            "labels": [[lab.value for lab in labs] for labs in scenario.labels],
            "fallback": scenario.fallback,
        },
        "cosmetic": {
            "background_id": scenario.cosmetic.background_id,
            "object_colors": list(scenario.cosmetic.object_colors),
            "light_id": scenario.cosmetic.light_id,
        },
    }


def serialize_scene(scenario: Scenario) -> bytes:
    return canonical_dumps(scene_to_dict(scenario)).encode("utf-8")


def _need(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"missing field {where}{key}")
    return d[key]


def parse_scene(data: bytes | str) -> Scenario:
    """Parse a scene file and re-verify its annotations against the geometry."""
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise SchemaError(f"not a scene file: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("scene file must hold an object")
    version = _need(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unknown schema_version {version!r}")
    raw_objects = _need(doc, "objects", "")
    if not isinstance(raw_objects, list) or not raw_objects:
        raise SchemaError("scene has no objects")
    s = _need(doc, "spec", "")
    ann = _need(doc, "annotations", "")
    cos = _need(doc, "cosmetic", "")
    try:
        objects = []
        for k, o in enumerate(raw_objects):
            shape = Shape(_need(o, "kind", f"objects[{k}]."), _need(o, "dims", f"objects[{k}]."),
                          _need(o, "density", f"objects[{k}]."))
            objects.append(PlacedObject(shape, Orientation(_need(o, "orientation", f"objects[{k}].")),
                                        _need(o, "offset_x", f"objects[{k}]."), _need(o, "offset_y", f"objects[{k}]."),
                                        _need(o, "z_base", f"objects[{k}].")))
        spec = ScenarioSpec(_need(s, "flavor", "spec."), int(_need(s, "height", "spec.")),
                            _need(s, "target", "spec."), _need(s, "violation_interface", "spec."),
                            int(_need(s, "seed", "spec.")))
        cosmetic = Cosmetic(int(_need(cos, "background_id", "cosmetic.")),
                            tuple(_need(cos, "object_colors", "cosmetic.")),
                            int(_need(cos, "light_id", "cosmetic.")))
        labels = tuple(tuple(Label(x) for x in labs) for labs in _need(ann, "labels", "annotations."))
    except SchemaError:
        raise
    except (ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from exc

    stack = Stack(tuple(objects))
    if spec.height != len(stack):
        raise ValidationError(f"spec height {spec.height} but {len(stack)} objects")
    rebuilt = Stack.build(stack.items())
    for k, (a, b) in enumerate(zip(stack.objects, rebuilt.objects)):
        if abs(a.z_base - b.z_base) > 1e-9:
            raise ValidationError(f"object {k} z_base {a.z_base} inconsistent with resting height {b.z_base}")
    try:
        report = check_stability(stack)
    except InvalidStack as exc:
        raise ValidationError(f"invalid stack: {exc}") from exc

    v = report.violation
    recomputed = {
        "stable": report.stable,
        "violation_type": None if v is None else v.type.value,
        "violating_index": None if v is None else v.violating_index,
        "first_to_fall": None if v is None else v.first_to_fall_index,
    }
    for key, want in recomputed.items():
        got = _need(ann, key, "annotations.")
        if got != want:
            raise ValidationError(f"annotation {key}={got!r} contradicts recomputed {want!r}")
    if labels != annotate(stack, report):
        raise ValidationError("segment labels contradict recomputed stability")
    return Scenario(stack, spec, report, labels, cosmetic, bool(ann.get("fallback", False)))


def read_scene(path) -> Scenario:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read scene {path}: {exc}") from exc
    return parse_scene(data)


def write_scene(path, scenario: Scenario) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(serialize_scene(scenario))


# --- manifests ------------------------------------------------------------------


def scene_path(planned: PlannedScenario) -> str:
    return f"{planned.split}/{planned.scenario_id}.scene"


def build_manifest(config: DatasetConfig, plan, by_id, file_bytes=None) -> dict:
    splits = {s: [] for s in SPLITS}
    files = {}
    counts: dict = {}
    fallbacks = 0
    for p in plan:
        path = scene_path(p)
        data = file_bytes[path] if file_bytes is not None else serialize_scene(by_id[p.scenario_id])
        splits[p.split].append(path)
        files[path] = sha256(data)
        sc = by_id[p.scenario_id]
        fallbacks += sc.fallback
        key = sc.spec.target.value
        c = counts.setdefault(sc.spec.flavor.value, {}).setdefault(p.split, {}).setdefault(str(sc.spec.height), {})
        c[key] = c.get(key, 0) + 1
    n = len(plan)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "master_seed": int(config.master_seed),
        "splits": splits,
        "files": files,
        "counts": counts,
        "split_totals": {s: len(splits[s]) for s in SPLITS},
        "scenarios": n,
        "views_per_scenario": VIEWS_PER_SCENARIO,
        "images_equivalent": n * VIEWS_PER_SCENARIO,
        "fallbacks": fallbacks,
        "content_hash": sha256(canonical_dumps(files).encode()),
    }


def write_manifest(manifest: dict, root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / MANIFEST_NAME
    path.write_bytes(canonical_dumps(manifest).encode("utf-8"))
    return path


def write_dataset(root, config: DatasetConfig, plan, by_id) -> dict:
    root = Path(root)
    blobs = {}
    try:
        for p in plan:
            path = scene_path(p)
            blobs[path] = serialize_scene(by_id[p.scenario_id])
            target = root / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(blobs[path])
        manifest = build_manifest(config, plan, by_id, blobs)
        write_manifest(manifest, root)
    except OSError as exc:
        raise IoError(f"cannot write dataset under {root}: {exc}") from exc
    return manifest


def load_manifest(root) -> dict:
    root = Path(root)
    path = root / MANIFEST_NAME if root.is_dir() else root
    try:
        manifest = json.loads(path.read_bytes())
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(f"malformed manifest {path}: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unknown manifest schema_version {manifest.get('schema_version')!r}")
    if sha256(canonical_dumps(manifest["files"]).encode()) != manifest["content_hash"]:
        raise HashMismatch(f"manifest content hash does not match its file table ({path})")
    return manifest


def dataset_root(path) -> Path:
    path = Path(path)
    return path if path.is_dir() else path.parent


def load_split(root, split: str, with_ids: bool = False):
    """Load and verify every scene of ``split``."""
    root = dataset_root(root)
    manifest = load_manifest(root)
    if split not in manifest["splits"]:
        raise IoError(f"unknown split {split!r} (have {sorted(manifest['splits'])})")
    out = []
    for rel in manifest["splits"][split]:
        try:
            data = (root / rel).read_bytes()
        except OSError as exc:
            raise IoError(f"split {split!r}: cannot read {rel}: {exc}") from exc
        if sha256(data) != manifest["files"][rel]:
            raise HashMismatch(f"{rel} does not match its manifest hash")
        sc = parse_scene(data)
        out.append((os.path.splitext(os.path.basename(rel))[0], sc) if with_ids else sc)
    return out
