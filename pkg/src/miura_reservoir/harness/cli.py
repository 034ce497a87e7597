"""Command-line front end.

Every command prints a JSON document on stdout. Failures exit nonzero with a
JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import tasks as T
from ..conditions import Simulator, make_condition, run_condition
from ..dynamics import PayloadSpec, amplitude_for_level, calibrate_crease_stiffness
from ..errors import ConfigError, ReservoirError
from ..geometry import build_miura_pattern, clamped_nodes, fold_miura
from ..reservoir import TargetSignal, reservoir_output, stack_segments, train_readout, trim_washout
from ..reservoir import ReadoutWeights
from .campaign import RunManifest, run_campaign
from .config import ExperimentConfig
from .io import TrajectoryStore, ingest_external, write_trajectory
from .report import report


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=T._plain))


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"grid.seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"workers={args.workers}")
    return cfg.with_overrides(overrides) if overrides else cfg


def protocol_from_config(cfg: ExperimentConfig) -> T.RunProtocol:
    levels = []
    for k, v in cfg.amplitude_levels.items():
        key = float(k)
        levels.append((int(key) if key.is_integer() else key, float(v)))
    return T.RunProtocol(
        duration=cfg.grid.duration,
        head=cfg.protocol.head,
        tail=cfg.protocol.tail,
        level=cfg.grid.level,
        levels=tuple(sorted(levels)),
        sample_rate=cfg.simulation.sample_rate,
        seed=cfg.grid.seed,
        lam=cfg.protocol.lam,
    )


def _tuples(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        out[k] = v
    return out


SPEC_TYPES = {
    "weight": T.WeightTaskSpec,
    "position": T.PositionTaskSpec,
    "pattern": T.PatternTaskSpec,
    "weight_position": T.WeightPositionSpec,
    "weight_frequency": T.WeightFrequencySpec,
}


def task_spec(kind: str, cfg: ExperimentConfig, **extra):
    params = _tuples({**cfg.tasks.get(kind, {}), **{k: v for k, v in extra.items() if v is not None}})
    try:
        return SPEC_TYPES[kind](**params, protocol=protocol_from_config(cfg))
    except TypeError as exc:
        raise ConfigError(f"task {kind}: {exc}") from None


def make_provider(cfg: ExperimentConfig, campaign_dir: str | None) -> Simulator:
    model = cfg.build_model()
    store = None
    if campaign_dir:
        RunManifest.load(campaign_dir)  # verifies hashes
        store = TrajectoryStore(Path(campaign_dir) / "trajectories")
    return Simulator(model, cfg.simulation, store=store, workers=cfg.parallelism)


# -- commands ------------------------------------------------------------------


def cmd_pattern(args):
    mesh = fold_miura(build_miura_pattern(args.rows, args.cols, args.panel_a, args.panel_b, args.gamma),
                      args.fold_angle, flip=args.flip)
    d = mesh.to_dict(clamped_nodes(mesh))
    if args.output:
        Path(args.output).write_text(json.dumps(d, indent=2) + "\n")
        _emit({"mesh": args.output, "nodes": len(d["nodes"]), "bars": len(d["bars"]), "hinges": len(d["hinges"])})
    else:
        _emit(d)


def cmd_calibrate(args):
    cfg = load_config(args)
    model = cfg.build_model()
    cal, freq = calibrate_crease_stiffness(model, args.target_hz, PayloadSpec(args.mass, args.position),
                                           facet_ratio=args.facet_ratio)
    out = {
        "crease_hinge_stiffness": cal.crease_hinge_stiffness,
        "facet_hinge_stiffness": cal.facet_hinge_stiffness,
        "fundamental_hz": freq,
        "target_hz": args.target_hz,
        "payload": [args.mass, args.position],
    }
    if args.write_config:
        cfg = cfg.with_overrides([f"model.crease_hinge_stiffness={cal.crease_hinge_stiffness!r}",
                                  f"model.facet_hinge_stiffness={cal.facet_hinge_stiffness!r}"])
        cfg.save(args.write_config)
        out["config"] = args.write_config
    _emit(out)


def cmd_simulate(args):
    cfg = load_config(args)
    amplitude = args.amplitude if args.amplitude is not None else amplitude_for_level(args.level, cfg.amplitude_levels)
    cond = make_condition(args.mass, args.position, ((amplitude, args.frequency, args.duration),), cfg.grid.seed)
    traj = run_condition(cfg.build_model(), cond, cfg.simulation)
    csv_path, meta_path = write_trajectory(traj, args.output)
    _emit({"trajectory": str(csv_path), "metadata": str(meta_path), "samples": traj.n_samples, "id": traj.trajectory_id})


def cmd_campaign(args):
    cfg = load_config(args)
    manifest = run_campaign(cfg, args.output)
    _emit({
        "manifest": str(manifest.path),
        "conditions": len(manifest.entries),
        "completed": len(manifest.completed),
        "failed": len(manifest.failed),
    })


def _targets(raw: list[str], n: int) -> list[list[float]]:
    if len(raw) != n:
        raise ValueError(f"need one --target per trajectory ({n}), got {len(raw)}")
    return [[float(x) for x in r.split(",")] for r in raw]


def cmd_train(args):
    trajs = [ingest_external(p, expected_rate=args.rate) for p in args.traj]
    targets = _targets(args.target, len(trajs))
    names = args.tasks.split(",")
    if any(len(t) != len(names) for t in targets):
        raise ValueError("each --target needs one value per task name")
    parts = [trim_washout(t, args.head, args.tail) for t in trajs]
    S = stack_segments(parts)
    Y = TargetSignal(np.vstack([np.tile(v, (p.n_rows, 1)) for v, p in zip(targets, parts)]), tuple(names))
    W = train_readout(S, Y, args.lam)
    W.save(args.output)
    out = reservoir_output(S, W)
    _emit({"weights": args.output, "rows": S.n_rows, "train_rmse": {
        n: float(np.sqrt(np.mean((out[:, j] - Y.values[:, j]) ** 2))) for j, n in enumerate(names)}})


def cmd_predict(args):
    W = ReadoutWeights.load(args.weights)
    results = []
    for p in args.traj:
        traj = ingest_external(p, expected_rate=args.rate)
        S = trim_washout(traj, args.head, args.tail)
        y = reservoir_output(S, W)
        entry = {"trajectory": traj.trajectory_id, "source": str(p),
                 "mean_output": {n: float(y[:, j].mean()) for j, n in enumerate(W.tasks)}}
        if args.window:
            rec = T.recognize_pattern(S, W, args.window)
            entry["window_estimates"] = rec["estimate"].tolist()
        results.append(entry)
    _emit({"predictions": results})


def _write_result(res: T.TaskResult, args) -> None:
    out_dir = Path(args.output)
    path = res.write(out_dir)
    _emit({"result": str(path), "task": res.task, "metrics": res.metrics})


def cmd_task(args):
    cfg = load_config(args)
    provider = make_provider(cfg, args.campaign)
    kind = args.kind
    if kind == "weight":
        if args.matrix:
            p = protocol_from_config(cfg)
            spec = task_spec("weight", cfg)
            res = T.weight_matrix_experiment(spec.train_masses[0], frequency=spec.frequency,
                                             position=spec.train_position, protocol=p, provider=provider,
                                             success_threshold=spec.success_threshold)
        else:
            res = T.run_weight_task(task_spec("weight", cfg), provider)
    elif kind == "position":
        if args.grid:
            masses = [m for m in cfg.grid.masses if m > 0]
            res = T.position_grid_experiment(masses, cfg.grid.frequencies, provider, protocol_from_config(cfg))
        else:
            res = T.run_position_task(task_spec("position", cfg), provider)
    elif kind == "pattern":
        spec = task_spec("pattern", cfg, mode=args.mode)
        if args.mode == "amplitude" and "train_patterns" not in cfg.tasks.get("pattern", {}):
            spec = replace(spec, train_patterns=(2.0, 1.0, 4.0))
        res = T.compare_with_baseline(spec, provider) if args.baseline else T.run_pattern_task(spec, provider)
    elif kind == "multitask":
        if args.pair == "weight-position":
            res = T.run_weight_position_multitask(task_spec("weight_position", cfg), provider)
        else:
            res = T.run_weight_frequency_multitask(task_spec("weight_frequency", cfg), provider)
    elif kind == "sweep":
        spec = task_spec(args.target_task, cfg)
        counts = tuple(int(c) for c in args.counts.split(",")) if args.counts else T.SWEEP_COUNTS
        res = T.dimensionality_sweep(spec, provider, counts, trials=args.trials, seed=cfg.grid.seed)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(kind)
    _write_result(res, args)


def cmd_ingest(args):
    traj = ingest_external(args.csv, args.metadata, expected_rate=args.rate)
    _emit({"samples": traj.n_samples, "nodes": traj.n_nodes, "sample_rate": traj.sample_rate,
           "duration": traj.duration, "id": traj.trajectory_id})


def cmd_report(args):
    results = [T.load_task_result(p) for p in args.results]
    paths = report(results, args.output, figures=not args.no_figures)
    _emit({"files": [str(p) for p in paths]})


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="miura-rc", description="Origami reservoir computing workbench")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
        p.add_argument("--seed", type=int, help="campaign seed")
        p.add_argument("--workers", type=int, help="parallel simulations (0 = all cores)")
        return p

    p = sub.add_parser("pattern", help="emit the folded mesh as JSON")
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=7)
    p.add_argument("--panel-a", type=float, default=20.0)
    p.add_argument("--panel-b", type=float, default=20.0)
    p.add_argument("--gamma", type=float, default=60.0)
    p.add_argument("--fold-angle", type=float, default=50.0)
    p.add_argument("--flip", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pattern)

    p = with_config(sub.add_parser("calibrate", help="tune crease stiffness to a loaded fundamental frequency"))
    p.add_argument("--target-hz", type=float, default=3.0)
    p.add_argument("--mass", type=float, default=10.0)
    p.add_argument("--position", default="a")
    p.add_argument("--facet-ratio", type=float, default=0.2)
    p.add_argument("--write-config", help="save a config with the calibrated stiffness")
    p.set_defaults(func=cmd_calibrate)

    p = with_config(sub.add_parser("simulate", help="simulate one condition to CSV + JSON"))
    p.add_argument("--mass", type=float, required=True)
    p.add_argument("--position", default="a")
    p.add_argument("--frequency", type=float, required=True)
    p.add_argument("--level", type=float, default=2)
    p.add_argument("--amplitude", type=float, help="base amplitude in mm (overrides --level)")
    p.add_argument("--duration", type=float, default=15.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = with_config(sub.add_parser("campaign", help="simulate the configured grid"))
    p.add_argument("-o", "--output", help="campaign directory (default: config output_dir)")
    p.set_defaults(func=cmd_campaign)

    def io_opts(p):
        p.add_argument("--head", type=float, default=5.0)
        p.add_argument("--tail", type=float, default=5.0)
        p.add_argument("--rate", type=float, help="required sample rate in Hz")

    p = sub.add_parser("train", help="train readout weights from trajectory files")
    p.add_argument("--traj", action="append", required=True)
    p.add_argument("--target", action="append", required=True, help="target value(s) per trajectory, comma separated")
    p.add_argument("--tasks", default="output", help="comma-separated task names")
    p.add_argument("--lam", type=float, default=0.0)
    io_opts(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply readout weights to trajectory files")
    p.add_argument("--weights", required=True)
    p.add_argument("--traj", action="append", required=True)
    p.add_argument("--window", type=float, help="also block-average over this window (s)")
    io_opts(p)
    p.set_defaults(func=cmd_predict)

    p = with_config(sub.add_parser("task", help="run an information-perception task"))
    p.add_argument("kind", choices=["weight", "position", "pattern", "multitask", "sweep"])
    p.add_argument("--campaign", help="reuse trajectories from a campaign directory")
    p.add_argument("--matrix", action="store_true", help="weight: full training-pair matrix")
    p.add_argument("--grid", action="store_true", help="position: colour map over the config grid")
    p.add_argument("--mode", choices=["frequency", "amplitude"], default="frequency")
    p.add_argument("--baseline", action="store_true", help="pattern: compare with bottom-row channels")
    p.add_argument("--pair", choices=["weight-position", "weight-frequency"], default="weight-position")
    p.add_argument("--target-task", choices=["weight", "pattern"], default="weight")
    p.add_argument("--counts", help="sweep: comma-separated channel counts")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("-o", "--output", default="results")
    p.set_defaults(func=cmd_task)

    p = sub.add_parser("ingest", help="validate an external displacement CSV")
    p.add_argument("csv")
    p.add_argument("--metadata")
    p.add_argument("--rate", type=float)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="render tables and figures from task result JSON files")
    p.add_argument("results", nargs="+")
    p.add_argument("-o", "--output", default="report")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        args.func(args)
    except ReservoirError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
