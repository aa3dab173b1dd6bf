"""Command-line interface: ``stackkit <command> [options]``.

Settings resolve as built-in defaults, then the JSON ``--config`` file
(top-level global keys plus one section per command), then explicit flags.
Every run prints the resolved settings first.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2

ANNEAL_KEYS = ("iterations", "initial_temp", "cooling", "proposal_std", "search_radius", "restarts", "global_prob")

GLOBAL_DEFAULTS = {"seed": 0, "out_dir": ".", "jobs": 1}


def _anneal_defaults(cfg) -> dict:
    d = asdict(cfg)
    return {k: d[k] for k in ANNEAL_KEYS}


def command_defaults() -> dict:
    from .planner import BALANCE_CONFIG
    from .predictor import TrainHyper
    from .scenegen import GenerationConfig
    from .stackability import AnnealingConfig

    g = GenerationConfig()
    h = TrainHyper()
    return {
        "generate": {"flavor": "all", "heights": [2, 3, 4, 5, 6], "scale": 1.0, "counts": None,
                     "splits": [0.7, 0.15, 0.15], "target": None, "delta_gen": g.delta_gen,
                     "max_retries": g.max_retries, "counterbalanced_every": 4},
        "check": {"margin": 0.0},
        "train": {"data": None, "sigma_obs": 0.0, "lr": h.lr, "epochs": h.epochs, "batch": h.batch,
                  "l2": h.l2, "model_out": "model.json"},
        "eval": {"data": None, "split": "test", "predictor": "logistic", "model": "model.json",
                 "sigma_score": 0.2},
        "rank": {"pool": "ccs:6", "spheres": 1, "predictor": "oracle", "model": None, "sigma_score": 0.2,
                 "perturbations": 4, **_anneal_defaults(AnnealingConfig())},
        "stack": {"pool": "cubes:12", "spheres": 2, "predictor": "oracle", "model": None, "sigma_score": 0.2,
                  "episodes": 50, "sigma_place": 0.0, "spawn_height": 0.5, "perturbations": 4,
                  "summary": "stack_summary.json", **_anneal_defaults(AnnealingConfig())},
        "balance": {"scene": None, "counterweight": "cube,cuboid,cylinder,sphere", "episodes": 50,
                    "predictor": "oracle", "model": None, "sigma_score": 0.2, "sigma_place": 0.0,
                    "summary": "balance_summary.json", **_anneal_defaults(BALANCE_CONFIG)},
        "render": {"view": "front", "output": None},
    }


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for unstable scenes."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _counts(text: str) -> dict:
    out = {}
    for part in text.split(","):
        h, n = part.split(":")
        out[str(int(h))] = int(n)
    return out


def _add_anneal(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--initial-temp", dest="initial_temp", type=float)
    p.add_argument("--cooling", type=float)
    p.add_argument("--proposal-std", dest="proposal_std", type=float)
    p.add_argument("--search-radius", dest="search_radius", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--global-prob", dest="global_prob", type=float)


def _add_predictor(p):
    p.add_argument("--predictor", choices=("oracle", "noisy", "logistic", "constant"))
    p.add_argument("--model", help="model file for the logistic predictor")
    p.add_argument("--sigma-score", dest="sigma_score", type=float, help="noise of the noisy oracle")


def _global_flags(default) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--seed", type=int, help="master seed (default: $STACKKIT_SEED or 0)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for outputs")
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--jobs", type=int, help="worker processes")
    return p


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the command; the copy on each
    # command suppresses its defaults so it cannot erase an earlier value
    common = _global_flags(argparse.SUPPRESS)
    parser = _Parser(prog="stackkit", description="Stack stability toolkit.", parents=[_global_flags(None)])
    parser.add_argument("--version", action="version", version=f"stackkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="generate an annotated scenario dataset")
    p.add_argument("--flavor", choices=("ccs", "cubes", "all"))
    p.add_argument("--heights", type=_ints, help="comma separated, e.g. 2,3,4")
    p.add_argument("--scale", type=float, help="fraction of the reference counts")
    p.add_argument("--counts", type=_counts, help="explicit totals per height, e.g. 2:400,3:400")
    p.add_argument("--splits", type=_floats, help="train,val,test fractions for --counts")
    p.add_argument("--target", choices=("stable", "counterbalanced", "vcom", "vpsf"))
    p.add_argument("--delta-gen", dest="delta_gen", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--counterbalanced-every", dest="counterbalanced_every", type=int)

    p = sub.add_parser("check", parents=[common], help="check the stability of a scene file")
    p.add_argument("scene")
    p.add_argument("--margin", type=float)

    p = sub.add_parser("train", parents=[common], help="train the logistic stability model")
    p.add_argument("--data", help="dataset root (directory holding the manifest)")
    p.add_argument("--sigma-obs", dest="sigma_obs", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--model-out", dest="model_out")

    p = sub.add_parser("eval", parents=[common], help="accuracy of a predictor on a dataset split")
    p.add_argument("--data")
    p.add_argument("--split")
    _add_predictor(p)

    p = sub.add_parser("rank", parents=[common], help="rank a pool of objects by stackability")
    p.add_argument("--pool", help="kind:n (cubes, ccs) or explicit list like cuboid:1x0.5x0.3,sphere:0.3")
    p.add_argument("--spheres", type=int)
    p.add_argument("--perturbations", type=int)
    _add_predictor(p)
    _add_anneal(p)

    p = sub.add_parser("stack", parents=[common], help="run greedy stacking episodes")
    p.add_argument("--pool")
    p.add_argument("--spheres", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--sigma-place", dest="sigma_place", type=float)
    p.add_argument("--spawn-height", dest="spawn_height", type=float)
    p.add_argument("--perturbations", type=int)
    p.add_argument("--summary", help="summary JSON file name (under --out-dir)")
    _add_predictor(p)
    _add_anneal(p)

    p = sub.add_parser("balance", parents=[common], help="counterbalance frozen unstable towers")
    p.add_argument("--scene", help="frozen unstable scene; otherwise random T towers are generated")
    p.add_argument("--counterweight", help="shape like cuboid:2x1x1, or classes cube,cuboid,cylinder,sphere")
    p.add_argument("--episodes", type=int)
    p.add_argument("--sigma-place", dest="sigma_place", type=float)
    p.add_argument("--summary")
    _add_predictor(p)
    _add_anneal(p)

    p = sub.add_parser("render", parents=[common], help="draw a scene as SVG")
    p.add_argument("scene")
    p.add_argument("--view", choices=("front", "side", "top", "all"))
    p.add_argument("--output", help="SVG file (default: <out-dir>/<scene>-<view>.svg)")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags into one settings dict."""
    env_seed = os.environ.get("STACKKIT_SEED")
    cfg = dict(GLOBAL_DEFAULTS)
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    cmd = args.command
    cfg.update(command_defaults()[cmd])
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        for k in GLOBAL_DEFAULTS:
            if k in file_cfg:
                cfg[k] = file_cfg[k]
        section = file_cfg.get(cmd, {})
        unknown = set(section) - set(cfg)
        if unknown:
            raise ValueError(f"unknown {cmd} settings in config: {', '.join(sorted(unknown))}")
        cfg.update(section)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = cmd
    return cfg


def _print_config(cfg: dict) -> None:
    print("resolved config:")
    print(json.dumps(cfg, sort_keys=True, indent=2))


def _anneal_cfg(cfg: dict, seed: int):
    from .stackability import AnnealingConfig

    return AnnealingConfig(seed=seed, **{k: cfg[k] for k in ANNEAL_KEYS})


def _factory(cfg: dict):
    from .predictor import PredictorFactory

    model = cfg.get("model")
    if model is not None and not os.path.isabs(model) and not os.path.exists(model):
        model = str(Path(cfg["out_dir"]) / model)
    return PredictorFactory(cfg["predictor"], cfg["sigma_score"], model)


def parse_shape(text: str):
    """``cube:0.5``, ``cuboid:2x1x1``, ``cylinder:0.3x0.8`` (radius x height), ``sphere:0.3``."""
    from .geometry import Orientation, Shape

    try:
        kind, dims = text.split(":")
        vals = [float(v) for v in dims.split("x")]
    except ValueError as exc:
        raise ValueError(f"bad shape {text!r}") from exc
    if kind == "cube" and len(vals) == 1:
        return Shape.cube(vals[0]), Orientation.HEIGHT_C
    if kind == "cuboid" and len(vals) == 3:
        return Shape.cuboid(*vals), Orientation.HEIGHT_C
    if kind == "cylinder" and len(vals) == 2:
        return Shape.cylinder(*vals), Orientation.UPRIGHT
    if kind == "sphere" and len(vals) == 1:
        return Shape.sphere(vals[0]), Orientation.ONLY
    raise ValueError(f"bad shape {text!r}")


def _pool_sampler(cfg: dict):
    """Return ``seed -> pool``; random pools for ``kind:n``, a fixed pool otherwise."""
    from .planner import sample_pool

    spec = cfg["pool"]
    head, _, tail = spec.partition(":")
    if head in ("cubes", "ccs") and tail.isdigit():
        n = int(tail)
        return lambda s: sample_pool(head, n, np.random.default_rng(s), cfg["spheres"])
    fixed = [parse_shape(t)[0] for t in spec.split(",") if t]
    return lambda s: list(fixed)


# --- commands -------------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    from .scenegen import DatasetConfig, GenerationConfig, generate_dataset

    flavors = ("ccs", "cubes") if cfg["flavor"] == "all" else (cfg["flavor"],)
    target = {None: None, "stable": "stable", "counterbalanced": "stable_counterbalanced",
              "vcom": "unstable_vcom", "vpsf": "unstable_vpsf"}[cfg["target"]]
    counts = None if cfg["counts"] is None else {int(k): int(v) for k, v in cfg["counts"].items()}
    dc = DatasetConfig(
        flavors=flavors, heights=tuple(cfg["heights"]), scale=cfg["scale"], counts=counts,
        split_fractions=tuple(cfg["splits"]), master_seed=cfg["seed"],
        counterbalanced_every=cfg["counterbalanced_every"], target=target,
        gen=GenerationConfig(delta_gen=cfg["delta_gen"], max_retries=cfg["max_retries"]),
    )
    manifest, _ = generate_dataset(dc, cfg["out_dir"], cfg["jobs"])
    print(f"{'flavor':<6} {'split':<5} {'h':>2} {'stable':>7} {'cbal':>6} {'vcom':>6} {'vpsf':>6} {'total':>6}")
    for flavor in sorted(manifest["counts"]):
        for split in ("train", "val", "test"):
            for h, c in sorted(manifest["counts"][flavor].get(split, {}).items(), key=lambda kv: int(kv[0])):
                row = [c.get(t, 0) for t in ("stable", "stable_counterbalanced", "unstable_vcom", "unstable_vpsf")]
                print(f"{flavor:<6} {split:<5} {h:>2} {row[0]:>7} {row[1]:>6} {row[2]:>6} {row[3]:>6} {sum(row):>6}")
    print(f"scenarios: {manifest['scenarios']} (images-equivalent {manifest['images_equivalent']})")
    print(f"fallbacks: {manifest['fallbacks']}")
    print(f"content hash: {manifest['content_hash']}")
    return EXIT_OK


def cmd_check(cfg: dict) -> int:
    from .dataset_io import read_scene
    from .stability import check_stability

    sc = read_scene(cfg["scene"])
    report = check_stability(sc.stack, cfg["margin"])
    print(f"stable: {str(report.stable).lower()}")
    for c in report.per_interface:
        kind = "degenerate" if c.degenerate else "planar"
        print(f"interface {c.index}: margin {c.margin:+.6f} {kind} {'ok' if c.satisfied else 'FAIL'}")
    v = report.violation
    if v is None:
        return EXIT_OK
    print(f"{v.type.value} at interface {v.violating_index} "
          f"(violating object {v.violating_index}, first to fall {v.first_to_fall_index})")
    return EXIT_UNSTABLE


def _split_data(root, split):
    from .dataset_io import load_split

    scenes = load_split(root, split)
    return [s.stack for s in scenes], [s.report.stable for s in scenes]


def cmd_train(cfg: dict) -> int:
    from .predictor import TrainHyper, accuracy, train_logistic

    if cfg["data"] is None:
        raise ValueError("--data is required")
    stacks, labels = _split_data(cfg["data"], "train")
    hyper = TrainHyper(cfg["lr"], cfg["epochs"], cfg["batch"], cfg["l2"], cfg["seed"])
    if hyper.epochs == 0:
        from .predictor import FeatureConfig, LogisticModel, N_INTERFACES, FEATURES_PER_INTERFACE

        model = LogisticModel(np.zeros(N_INTERFACES * FEATURES_PER_INTERFACE), 0.0,
                              FeatureConfig(cfg["sigma_obs"], cfg["seed"]), [])
    else:
        model = train_logistic(list(zip(stacks, labels)), hyper, cfg["sigma_obs"], cfg["seed"])
        print(f"train loss: {model.loss_trace[0]:.6f} -> {model.loss_trace[-1]:.6f}")
    for split in ("val", "test"):
        s, y = _split_data(cfg["data"], split)
        if s:
            print(f"{split} accuracy: {100 * accuracy(model, s, y):.1f}%")
    out = Path(cfg["out_dir"]) / cfg["model_out"]
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"model: {out}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    from .predictor import LogisticModel, accuracy, predictor_accuracy

    if cfg["data"] is None:
        raise ValueError("--data is required")
    stacks, labels = _split_data(cfg["data"], cfg["split"])
    if not stacks:
        raise ValueError(f"split {cfg['split']!r} is empty")
    f = _factory(cfg)
    if f.kind == "logistic":
        acc = accuracy(LogisticModel.load(f.model_path), stacks, labels, seed=cfg["seed"])
    else:
        acc = predictor_accuracy(f(cfg["seed"]), stacks, labels)
    print(f"{cfg['split']} scenarios: {len(stacks)}")
    print(f"accuracy: {100 * acc:.1f}%")
    return EXIT_OK


def cmd_rank(cfg: dict) -> int:
    from .stackability import rank_pool

    pool = _pool_sampler(cfg)(cfg["seed"])
    res = rank_pool(pool, _factory(cfg)(cfg["seed"]), _anneal_cfg(cfg, cfg["seed"]), cfg["perturbations"])
    print(f"{'rank':>4} {'index':>5}  {'object':<28} {'orientation':<12} {'score':>6}")
    for r, (i, desc, orient, score) in enumerate(res.table(pool), start=1):
        print(f"{r:>4} {i:>5}  {desc:<28} {orient:<12} {score:>6.3f}")
    return EXIT_OK


def _stack_episode(args):
    from .planner import StackingEpisode, run_stacking

    cfg, s = args
    pool = _pool_sampler(cfg)(s)
    ep = StackingEpisode(pool, _factory(cfg)(s), _anneal_cfg(cfg, s), cfg["spawn_height"], cfg["sigma_place"], s,
                         cfg["perturbations"])
    return run_stacking(ep).height


def cmd_stack(cfg: dict) -> int:
    from .stackability import derive_seed

    args = [(cfg, derive_seed(cfg["seed"], e)) for e in range(cfg["episodes"])]
    if cfg["jobs"] > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as ex:
            heights = list(ex.map(_stack_episode, args))
    else:
        heights = [_stack_episode(a) for a in args]
    top = max(heights)
    hist = {h: heights.count(h) for h in range(1, top + 1)}
    print("height  episodes")
    for h, c in hist.items():
        print(f"{h:>6}  {c:>8}  {'#' * c}".rstrip())
    mean = float(np.mean(heights))
    print(f"mean height: {mean:.2f}")
    if cfg["summary"]:
        from .dataset_io import canonical_dumps

        out = Path(cfg["out_dir"]) / cfg["summary"]
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(canonical_dumps({"heights": heights, "histogram": {str(h): c for h, c in hist.items()},
                                        "mean_height": mean}))
    return EXIT_OK


def cmd_balance(cfg: dict) -> int:
    from .dataset_io import canonical_dumps, read_scene
    from .planner import BalanceTask, COUNTERWEIGHTS, make_t_task, run_balance
    from .stackability import derive_seed

    f = _factory(cfg)
    anneal = _anneal_cfg(cfg, cfg["seed"])
    summary = {}
    if cfg["scene"] is not None:
        frozen = read_scene(cfg["scene"]).stack
        shape, orient = parse_shape(cfg["counterweight"])
        ok = 0
        for e in range(cfg["episodes"]):
            s = derive_seed(cfg["seed"], e)
            task = run_balance(BalanceTask(frozen, shape, orient), f(s), replace(anneal, seed=s), cfg["sigma_place"], s)
            ok += task.success
            if e == 0:
                print(f"first placement: x={task.offset[0]:.4f} y={task.offset[1]:.4f} "
                      f"score={task.score:.3f} {'success' if task.success else 'failure'}")
        summary[cfg["counterweight"]] = {"episodes": cfg["episodes"], "success": ok}
        print(f"success: {ok}/{cfg['episodes']} ({100 * ok / cfg['episodes']:.1f}%)")
    else:
        kinds = [k for k in cfg["counterweight"].split(",") if k]
        for k in kinds:
            if k not in COUNTERWEIGHTS:
                raise ValueError(f"unknown counterweight class {k!r}")
        print(f"{'counterweight':<13} {'success':>8} {'feasible':>9} {'on feasible':>12} {'rate':>7}")
        for c, kind in enumerate(kinds):
            rng = np.random.default_rng(derive_seed(cfg["seed"], c))
            ok = feas = ok_feas = 0
            for e in range(cfg["episodes"]):
                task = make_t_task(rng, kind)
                s = derive_seed(cfg["seed"], c, e)
                run_balance(task, f(s), replace(anneal, seed=s), cfg["sigma_place"], s)
                ok += task.success
                feas += task.feasible
                ok_feas += task.success and task.feasible
            n = cfg["episodes"]
            summary[kind] = {"episodes": n, "success": ok, "feasible": feas, "success_on_feasible": ok_feas}
            print(f"{kind:<13} {ok:>8} {feas:>9} {ok_feas:>12} {100 * ok / n:>6.1f}%")
    if cfg["summary"]:
        out = Path(cfg["out_dir"]) / cfg["summary"]
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(canonical_dumps(summary))
    return EXIT_OK


def cmd_render(cfg: dict) -> int:
    from .dataset_io import read_scene
    from .render import VIEWS, render_scenario

    sc = read_scene(cfg["scene"])
    views = VIEWS if cfg["view"] == "all" else (cfg["view"],)
    stem = Path(cfg["scene"]).stem
    for view in views:
        if cfg["output"] and len(views) == 1:
            out = Path(cfg["output"])
        else:
            out = Path(cfg["out_dir"]) / f"{stem}-{view}.svg"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(render_scenario(sc, view))
        print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "check": cmd_check, "train": cmd_train, "eval": cmd_eval,
    "rank": cmd_rank, "stack": cmd_stack, "balance": cmd_balance, "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        _print_config(cfg)
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # every failure is a diagnostic plus exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
