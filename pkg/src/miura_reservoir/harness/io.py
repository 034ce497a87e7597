"""Trajectory files: CSV of displacements plus a JSON metadata sidecar.

The CSV has a header ``t,node_00,node_01,...`` with times in seconds and
vertical displacements in millimetres, one row per sample. Values are
written with 17 significant digits so a write/read cycle is lossless.
The same format is the ingestion contract for externally measured data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from ..conditions import Condition
from ..dynamics import Trajectory
from ..errors import FormatError, RateMismatch

RATE_TOLERANCE = 1e-6


def _fmt(v: float) -> str:
    return "%.17g" % v


def trajectory_csv_text(traj: Trajectory) -> str:
    lines = [",".join(["t", *traj.node_names])]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join([_fmt(t), *(_fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(traj: Trajectory, csv_path: str | Path, meta_path: str | Path | None = None) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    _atomic_write(csv_path, trajectory_csv_text(traj))
    meta = {"sample_rate": traj.sample_rate, "node_names": list(traj.node_names), "metadata": traj.metadata}
    _atomic_write(meta_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def ingest_external(csv_path: str | Path, meta_path: str | Path | None = None,
                    expected_rate: float | None = None) -> Trajectory:
    """Validate and load a displacement CSV plus sidecar into a Trajectory.

    The sidecar needs ``sample_rate``; ``metadata`` is optional. Raises
    FormatError naming the offending line and column, and RateMismatch when
    the sidecar rate or the time column disagree with ``expected_rate``.
    """
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise FormatError(f"metadata file {meta_path} not found") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"metadata is not valid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(meta, dict) or "sample_rate" not in meta:
        raise FormatError("metadata lacks sample_rate", column="sample_rate")
    rate = float(meta["sample_rate"])
    if not rate > 0:
        raise FormatError("sample_rate must be positive", column="sample_rate")
    if expected_rate is not None and abs(rate - expected_rate) > RATE_TOLERANCE * expected_rate:
        raise RateMismatch(f"data sampled at {rate:g} Hz, task expects {expected_rate:g} Hz")

    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", 1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t":
            raise FormatError("first column must be 't'", 1, header[0] if header else None)
        names = header[1:]
        expected = meta.get("node_names")
        if expected:
            missing = [n for n in expected if n not in names]
            if missing:
                raise FormatError(f"missing column {missing[0]!r}", 1, missing[0])
            extra = [n for n in names if n not in expected]
            if extra:
                raise FormatError(f"unexpected column {extra[0]!r}", 1, extra[0])
        if not names:
            raise FormatError("no node columns", 1)
        if len(set(names)) != len(names):
            raise FormatError("duplicate column names", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(row)}", lineno)
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(f"non-numeric value {cell!r}", lineno, col) from None
                if not math.isfinite(v):
                    raise FormatError(f"non-finite value {cell!r}", lineno, col)
                values.append(v)
            rows.append(values)
    if not rows:
        raise FormatError("no data rows", 2)
    data = np.array(rows, dtype=float)
    times, states = data[:, 0], data[:, 1:]
    if len(times) > 1:
        steps = np.diff(times)
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0)) + 3
            raise FormatError("time column must increase", bad, "t")
        if np.max(np.abs(steps - 1.0 / rate)) > 1e-6 / rate + 1e-9:
            raise RateMismatch(f"time column spacing does not match the declared {rate:g} Hz")
    if expected:
        order = [names.index(n) for n in expected]
        states = states[:, order]
        names = list(expected)
    metadata = dict(meta.get("metadata") or {})
    metadata.setdefault("source", str(csv_path.name))
    return Trajectory(rate, times, states, tuple(names), metadata)


class TrajectoryStore:
    """Directory of trajectories keyed by condition hash."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def paths(self, condition: Condition, model_hash: str) -> tuple[Path, Path]:
        key = condition.key(model_hash)
        return self.root / f"{key}.csv", self.root / f"{key}.json"

    def exists(self, condition: Condition, model_hash: str) -> bool:
        return all(p.exists() for p in self.paths(condition, model_hash))

    def load(self, condition: Condition, model_hash: str) -> Trajectory | None:
        csv_path, meta_path = self.paths(condition, model_hash)
        if not (csv_path.exists() and meta_path.exists()):
            return None
        return ingest_external(csv_path, meta_path)

    def save(self, condition: Condition, model_hash: str, traj: Trajectory) -> tuple[Path, Path]:
        return write_trajectory(traj, *self.paths(condition, model_hash))
