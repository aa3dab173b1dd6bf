import json
import subprocess
import sys

import pytest

from stackkit.cli import EXIT_ERROR, EXIT_OK, EXIT_UNSTABLE, main, parse_shape
from stackkit.dataset_io import MANIFEST_NAME, write_scene
from stackkit.geometry import Orientation
from stackkit.planner import hand_t_task, task_scenario
from stackkit.scenegen import ScenarioSpec, generate


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def resolved(out):
    text = out.split("resolved config:\n", 1)[1]
    # the JSON block ends at the first line that closes the top-level object
    end = text.index("\n}") + 2
    return json.loads(text[:end])


@pytest.fixture
def scenes(tmp_path):
    paths = {}
    for name, spec in {
        "stable": ScenarioSpec("ccs", 3, "stable", None, 1),
        "vpsf": ScenarioSpec("ccs", 4, "unstable_vpsf", 2, 2),
        "vcom": ScenarioSpec("cubes", 3, "unstable_vcom", 0, 3),
    }.items():
        paths[name] = tmp_path / f"{name}.scene"
        write_scene(paths[name], generate(spec))
    paths["t"] = tmp_path / "t_unstable.scene"
    write_scene(paths["t"], task_scenario(hand_t_task()))
    paths["junk"] = tmp_path / "junk.scene"
    paths["junk"].write_text("{not json")
    return paths


def test_check_exit_codes(capsys, scenes):
    code, out, _ = run(capsys, "check", scenes["stable"])
    assert code == EXIT_OK and "stable: true" in out
    code, out, _ = run(capsys, "check", scenes["vpsf"])
    assert code == EXIT_UNSTABLE and "VPSF at interface 2" in out
    code, out, _ = run(capsys, "check", scenes["vcom"])
    assert code == EXIT_UNSTABLE and "VCOM at interface 0" in out
    code, _, err = run(capsys, "check", scenes["junk"])
    assert code == EXIT_ERROR and "SchemaError" in err
    code, _, _ = run(capsys, "check", scenes["stable"].parent / "missing.scene")
    assert code == EXIT_ERROR


def test_usage_errors_exit_one(capsys):
    assert run(capsys, "frobnicate")[0] == EXIT_ERROR
    assert run(capsys, "check")[0] == EXIT_ERROR
    assert run(capsys, "generate", "--scale", "abc")[0] == EXIT_ERROR


def test_prints_resolved_config(capsys, scenes):
    code, out, _ = run(capsys, "--seed", "5", "check", scenes["stable"], "--margin", "0.01")
    cfg = resolved(out)
    assert cfg["seed"] == 5 and cfg["margin"] == 0.01 and cfg["command"] == "check"


def test_precedence_flag_over_file_over_default(capsys, scenes, tmp_path, monkeypatch):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"seed": 11, "check": {"margin": 0.02}}))
    cfg = resolved(run(capsys, "check", scenes["stable"], "--config", conf)[1])
    assert cfg["seed"] == 11 and cfg["margin"] == 0.02
    cfg = resolved(run(capsys, "check", scenes["stable"], "--config", conf, "--margin", "0.03", "--seed", "4")[1])
    assert cfg["seed"] == 4 and cfg["margin"] == 0.03
    monkeypatch.setenv("STACKKIT_SEED", "77")
    assert resolved(run(capsys, "check", scenes["stable"])[1])["seed"] == 77
    # a global flag given before the command survives the subcommand parser
    assert resolved(run(capsys, "--seed", "3", "check", scenes["stable"])[1])["seed"] == 3


def test_unknown_config_key_rejected(capsys, scenes, tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"check": {"bogus": 1}}))
    code, _, err = run(capsys, "check", scenes["stable"], "--config", conf)
    assert code == EXIT_ERROR and "bogus" in err


def test_generate_table_and_hash(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--flavor", "ccs", "--scale", "0.01", "--seed", "42", "--out-dir", tmp_path / "a")
    assert code == EXIT_OK
    assert any(line.split()[:3] == ["ccs", "train", "2"] and line.split()[-1] == "13" for line in out.splitlines())
    manifest = json.loads((tmp_path / "a" / MANIFEST_NAME).read_text())
    assert manifest["split_totals"]["train"] == 13 + 25 + 17 + 7 + 2
    hashes = []
    for name in ("b", "c"):
        out = run(capsys, "generate", "--flavor", "cubes", "--heights", "2", "--scale", "0.01",
                  "--seed", "9", "--out-dir", tmp_path / name)[1]
        hashes.append([line for line in out.splitlines() if line.startswith("content hash")][0])
    assert hashes[0] == hashes[1]


def test_generate_cubes_vpsf_fails(capsys, tmp_path):
    code, _, err = run(capsys, "generate", "--flavor", "cubes", "--target", "vpsf", "--scale", "0.01",
                       "--out-dir", tmp_path)
    assert code == EXIT_ERROR and "InvalidSpec" in err


def test_train_and_eval(capsys, tmp_path):
    data = tmp_path / "data"
    assert run(capsys, "generate", "--flavor", "ccs", "--counts", "2:150,3:150,4:150", "--seed", "1",
               "--out-dir", data)[0] == EXIT_OK
    code, out, _ = run(capsys, "train", "--data", data, "--epochs", "100", "--out-dir", tmp_path)
    assert code == EXIT_OK
    acc = [float(line.split()[-1][:-1]) for line in out.splitlines() if line.startswith("test accuracy")]
    assert acc and acc[0] >= 90.0
    code, out, _ = run(capsys, "eval", "--data", data, "--model", tmp_path / "model.json")
    assert code == EXIT_OK and "accuracy: " in out
    code, out, _ = run(capsys, "eval", "--data", data, "--predictor", "oracle")
    assert "accuracy: 100.0%" in out
    code, out, _ = run(capsys, "train", "--data", data, "--epochs", "0", "--out-dir", tmp_path,
                       "--model-out", "zero.json")
    zero = [float(line.split()[-1][:-1]) for line in out.splitlines() if line.startswith("test accuracy")][0]
    assert 45.0 <= zero <= 55.0


def test_rank(capsys):
    code, out, _ = run(capsys, "rank", "--pool", "sphere:0.35,cylinder:0.35x0.5,cuboid:1x0.8x0.3",
                       "--perturbations", "2")
    assert code == EXIT_OK
    rows = [line.split() for line in out.splitlines() if line[:4].strip().isdigit()]
    assert [r[1] for r in rows][-1] == "0"
    assert rows[-1][-1] == "0.000"


def test_stack_histogram(capsys, tmp_path):
    code, out, _ = run(capsys, "stack", "--pool", "cubes:6", "--episodes", "3", "--perturbations", "1",
                       "--out-dir", tmp_path)
    assert code == EXIT_OK
    assert "mean height: 6.00" in out
    summary = json.loads((tmp_path / "stack_summary.json").read_text())
    assert summary["heights"] == [6, 6, 6]
    assert all(line == line.rstrip() for line in out.splitlines())


def test_balance_t_scene(capsys, scenes, tmp_path):
    code, out, _ = run(capsys, "balance", "--scene", scenes["t"], "--counterweight", "cuboid:2x1x1",
                       "--episodes", "2", "--out-dir", tmp_path)
    assert code == EXIT_OK and "success: 2/2" in out


def test_balance_classes(capsys, tmp_path):
    code, out, _ = run(capsys, "balance", "--counterweight", "cube,sphere", "--episodes", "2", "--out-dir", tmp_path)
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "balance_summary.json").read_text())
    assert set(summary) == {"cube", "sphere"}
    assert run(capsys, "balance", "--counterweight", "anvil", "--episodes", "1", "--out-dir", tmp_path)[0] == EXIT_ERROR


def test_render_views(capsys, scenes, tmp_path):
    code, _, _ = run(capsys, "render", scenes["vcom"], "--view", "all", "--out-dir", tmp_path)
    assert code == EXIT_OK
    files = sorted(p.name for p in tmp_path.glob("vcom-*.svg"))
    assert files == ["vcom-front.svg", "vcom-side.svg", "vcom-top.svg"]
    first = (tmp_path / "vcom-front.svg").read_bytes()
    run(capsys, "render", scenes["vcom"], "--view", "front", "--output", tmp_path / "again.svg")
    assert (tmp_path / "again.svg").read_bytes() == first
    assert b'class="violating"' in first


def test_same_seed_same_stdout(capsys):
    args = ("stack", "--pool", "ccs:5", "--episodes", "2", "--perturbations", "1", "--sigma-place", "0.1",
            "--summary", "", "--seed", "3")
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def test_parse_shape():
    s, o = parse_shape("cylinder:0.3x0.8")
    assert s.dims == (0.3, 0.8) and o is Orientation.UPRIGHT
    for bad in ("cube", "cube:1x2", "torus:1", "cuboid:axbxc"):
        with pytest.raises(ValueError):
            parse_shape(bad)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "stackkit", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("stackkit ")
