import json
import math
import struct

import numpy as np
import pytest

from stackkit.dataset_io import (
    HashMismatch,
    IoError,
    MANIFEST_NAME,
    SchemaError,
    ValidationError,
    canonical_dumps,
    format_float,
    load_manifest,
    load_split,
    parse_scene,
    read_scene,
    serialize_scene,
    write_scene,
)
from stackkit.scenegen import DatasetConfig, ScenarioSpec, Target, generate, generate_dataset


def small_config(seed=3):
    return DatasetConfig(flavors=("ccs",), heights=(2, 3), scale=0.01, master_seed=seed)


def some_scene(seed=4, target="unstable_vcom"):
    return generate(ScenarioSpec("ccs", 4, target, None, seed))


def test_format_float_exact_round_trip():
    rng = np.random.default_rng(0)
    for bits in rng.integers(0, 2**63, size=2000, dtype=np.int64):
        x = struct.unpack("<d", struct.pack("<q", int(bits)))[0]
        if math.isfinite(x):
            assert float(format_float(x)) == x


def test_canonical_dumps_sorted_and_stable():
    a = canonical_dumps({"b": 1, "a": [0.1, None, True], "c": {"z": "s", "y": 2.5}})
    b = canonical_dumps({"c": {"y": 2.5, "z": "s"}, "a": [0.1, None, True], "b": 1})
    assert a == b
    assert json.loads(a) == {"a": [0.1, None, True], "b": 1, "c": {"y": 2.5, "z": "s"}}


def test_round_trip_thousand_scenarios():
    rng = np.random.default_rng(17)
    targets = list(Target)
    for k in range(1000):
        flavor = "ccs" if k % 2 else "cubes"
        target = targets[k % len(targets)]
        if flavor == "cubes" and target is Target.UNSTABLE_VPSF:
            target = Target.UNSTABLE_VCOM
        sc = generate(ScenarioSpec(flavor, int(rng.integers(2, 7)), target, None, int(rng.integers(2**63))))
        data = serialize_scene(sc)
        back = parse_scene(data)
        assert back == sc
        assert serialize_scene(back) == data


def test_file_round_trip(tmp_path):
    sc = some_scene()
    write_scene(tmp_path / "a" / "x.scene", sc)
    assert read_scene(tmp_path / "a" / "x.scene") == sc


def test_tampered_stable_flag_rejected():
    doc = json.loads(serialize_scene(some_scene()))
    doc["annotations"]["stable"] = True
    with pytest.raises(ValidationError):
        parse_scene(canonical_dumps(doc))


def test_tampered_labels_rejected():
    doc = json.loads(serialize_scene(some_scene()))
    doc["annotations"]["labels"][0] = ["top"]
    with pytest.raises(ValidationError):
        parse_scene(canonical_dumps(doc))


def test_inconsistent_z_rejected():
    doc = json.loads(serialize_scene(some_scene(target="stable")))
    doc["objects"][1]["z_base"] += 0.01
    with pytest.raises(ValidationError):
        parse_scene(canonical_dumps(doc))


def test_empty_objects_is_schema_error():
    doc = json.loads(serialize_scene(some_scene()))
    doc["objects"] = []
    with pytest.raises(SchemaError):
        parse_scene(canonical_dumps(doc))


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(schema_version=99),
    lambda d: d.pop("annotations"),
    lambda d: d["objects"][0].pop("density"),
    lambda d: d["objects"][0].update(kind="pyramid"),
])
def test_schema_errors(mutate):
    doc = json.loads(serialize_scene(some_scene()))
    mutate(doc)
    with pytest.raises(SchemaError):
        parse_scene(canonical_dumps(doc))


def test_garbage_is_schema_error():
    with pytest.raises(SchemaError):
        parse_scene(b"\x00not json")


def test_missing_scene_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        read_scene(tmp_path / "nope.scene")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    manifest, by_id = generate_dataset(small_config(), root)
    return root, manifest, by_id


def test_manifest_counts_match_files(dataset):
    root, manifest, _ = dataset
    on_disk = sorted(str(p.relative_to(root)) for p in root.rglob("*.scene"))
    assert on_disk == sorted(manifest["files"])
    for split, paths in manifest["splits"].items():
        assert manifest["split_totals"][split] == len(paths)
        assert len(list((root / split).glob("*.scene"))) == len(paths)
    total = sum(
        n for per_split in manifest["counts"].values() for per_h in per_split.values()
        for per_t in per_h.values() for n in per_t.values()
    )
    assert total == manifest["scenarios"] == len(on_disk)
    assert manifest["images_equivalent"] == 16 * manifest["scenarios"]


def test_load_split_matches_manifest(dataset):
    root, manifest, by_id = dataset
    for split in ("train", "val", "test"):
        loaded = load_split(root, split, with_ids=True)
        assert len(loaded) == manifest["split_totals"][split]
        for sid, sc in loaded:
            assert sc == by_id[sid]
    # the manifest path itself also works
    assert len(load_split(root / MANIFEST_NAME, "val")) == manifest["split_totals"]["val"]


def test_unknown_split_is_io_error(dataset):
    with pytest.raises(IoError):
        load_split(dataset[0], "holdout")


def test_missing_manifest_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_manifest(tmp_path)


def test_corrupt_scene_is_hash_mismatch(tmp_path):
    generate_dataset(small_config(5), tmp_path)
    manifest = load_manifest(tmp_path)
    victim = tmp_path / manifest["splits"]["train"][0]
    victim.write_bytes(victim.read_bytes().replace(b"\n", b"\n ", 1))
    with pytest.raises(HashMismatch):
        load_split(tmp_path, "train")


def test_tampered_file_table_is_hash_mismatch(tmp_path):
    generate_dataset(small_config(6), tmp_path)
    path = tmp_path / MANIFEST_NAME
    doc = json.loads(path.read_bytes())
    first = sorted(doc["files"])[0]
    doc["files"][first] = "0" * 64
    path.write_text(canonical_dumps(doc))
    with pytest.raises(HashMismatch):
        load_manifest(tmp_path)


def test_same_seed_gives_identical_manifest(tmp_path):
    a, _ = generate_dataset(small_config(9), tmp_path / "a")
    b, _ = generate_dataset(small_config(9), tmp_path / "b")
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
    assert a["content_hash"] == b["content_hash"]


def test_parallel_generation_is_identical(tmp_path):
    a, _ = generate_dataset(small_config(11), tmp_path / "a", jobs=1)
    b, _ = generate_dataset(small_config(11), tmp_path / "b", jobs=2)
    assert a == b
