"""Information-perception experiments on the origami reservoir.

Every experiment follows the same protocol: simulate 15 s runs, drop 5 s of
washout at each end, stack the training windows, fit a linear readout to a
piecewise-constant target and score held-out runs.
"""

from __future__ import annotations

import json
from fractions import Fraction
from math import gcd, lcm
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .conditions import Condition, TrajectoryProvider, make_condition
from .dynamics import (
    DEFAULT_AMPLITUDE_LEVELS,
    POSITION_LABELS,
    Trajectory,
    amplitude_for_level,
)
from .errors import ChannelMismatch, DimensionMismatch, InsufficientSamples
from .reservoir import (
    ReadoutWeights,
    StateMatrix,
    TargetSignal,
    reservoir_output,
    rmse,
    random_subset,
    select_channels,
    stack_segments,
    train_readout,
    trim_washout,
)

LEFT, RIGHT = "Left", "Right"
BOTTOM_BASELINE_CHANNELS = (0, 1, 2, 3)


@dataclass(frozen=True)
class RunProtocol:
    """Shared run settings: 15 s runs at amplitude level 2 with 5 s washout."""

    duration: float = 15.0
    head: float = 5.0
    tail: float = 5.0
    level: float = 2
    levels: tuple[tuple[float, float], ...] = tuple(DEFAULT_AMPLITUDE_LEVELS.items())
    sample_rate: float = 25.0
    seed: int = 0
    lam: float = 0.0

    @property
    def amplitude(self) -> float:
        return amplitude_for_level(self.level, dict(self.levels))

    def amplitude_of(self, level) -> float:
        return amplitude_for_level(level, dict(self.levels))

    @property
    def window_rows(self) -> int:
        return int(round((self.duration - self.head - self.tail) * self.sample_rate))

    def condition(self, mass, position, frequency) -> Condition:
        return make_condition(mass, position, ((self.amplitude, frequency, self.duration),), self.seed)

    def window(self, traj: Trajectory) -> StateMatrix:
        return trim_washout(traj, self.head, self.tail)


@dataclass
class TaskResult:
    task: str
    spec: dict
    predictions: list[dict]
    metrics: dict
    weights: ReadoutWeights | None = None
    series: dict[str, dict] = field(default_factory=dict)
    tables: dict[str, dict] = field(default_factory=dict)

    def to_dict(self, series_paths: dict[str, str] | None = None) -> dict:
        return {
            "task": self.task,
            "spec": self.spec,
            "predictions": self.predictions,
            "metrics": self.metrics,
            "weights": None if self.weights is None else self.weights.to_dict(),
            "tables": self.tables,
            "series": series_paths if series_paths is not None else sorted(self.series),
        }

    def write(self, directory: str | Path, stem: str | None = None) -> Path:
        """Write ``<stem>.json`` plus one CSV per output series."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.task
        paths = {}
        for name, s in sorted(self.series.items()):
            path = directory / f"{stem}__{name}.csv"
            write_series_csv(path, s)
            paths[name] = path.name
        out = directory / f"{stem}.json"
        out.write_text(json.dumps(self.to_dict(paths), indent=2, sort_keys=True, default=_plain) + "\n")
        return out


def read_series_csv(path: Path) -> dict:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float).reshape(-1, len(header))
    labels = [h[2:] for h in header[1:] if h.startswith("y_")]
    k = len(labels)
    return _series(data[:, 0], data[:, 1 : 1 + k], data[:, 1 + k : 1 + 2 * k], labels)


def load_task_result(path: str | Path) -> TaskResult:
    """Read a result written by ``TaskResult.write`` including its series CSVs."""
    path = Path(path)
    d = json.loads(path.read_text())
    series = {}
    if isinstance(d.get("series"), dict):
        series = {name: read_series_csv(path.parent / fname) for name, fname in d["series"].items()}
    weights = ReadoutWeights.from_dict(d["weights"]) if d.get("weights") else None
    return TaskResult(d["task"], d["spec"], d["predictions"], d["metrics"], weights, series, d.get("tables", {}))


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def write_series_csv(path: Path, series: dict) -> None:
    t = np.asarray(series["t"], dtype=float)
    y = np.asarray(series["y"], dtype=float).reshape(len(t), -1)
    target = np.asarray(series["target"], dtype=float).reshape(len(t), -1)
    labels = series.get("labels") or [f"task{i + 1}" for i in range(y.shape[1])]
    header = ["t"] + [f"y_{lab}" for lab in labels] + [f"target_{lab}" for lab in labels]
    lines = [",".join(header)]
    for i in range(len(t)):
        row = [t[i], *y[i], *target[i]]
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _series(t, y, target, labels) -> dict:
    return {"t": np.asarray(t), "y": np.asarray(y), "target": np.asarray(target), "labels": list(labels)}


def _restrict(S: StateMatrix, channels: Sequence[int] | None) -> StateMatrix:
    return S if channels is None else select_channels(S, channels)


def _column(W: ReadoutWeights, task: str | None) -> int:
    if task is None:
        return 0
    return W.tasks.index(task)


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""

    def ranks(a):
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        r[order] = np.arange(len(a), dtype=float)
        for v in np.unique(a):
            tie = a == v
            r[tie] = r[tie].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.sum(rx**2) * np.sum(ry**2))
    return float(np.sum(rx * ry) / denom) if denom > 0 else 0.0


# -- payload weight ------------------------------------------------------------------


@dataclass(frozen=True)
class WeightTaskSpec:
    train_masses: tuple[float, float] = (3.0, 16.0)
    train_position: str = "a"
    frequency: float = 3.0
    test_masses: tuple[float, ...] = tuple(float(m) for m in range(4, 16))
    success_threshold: float = 0.30
    protocol: RunProtocol = RunProtocol()

    def __post_init__(self):
        if self.train_masses[0] == self.train_masses[1]:
            raise ValueError("the two training masses must differ")
        if not 0 < self.success_threshold < 1:
            raise ValueError("success threshold must lie in (0, 1)")

    def conditions(self) -> list[Condition]:
        masses = list(self.train_masses) + [m for m in self.test_masses if m not in self.train_masses]
        return [self.protocol.condition(m, self.train_position, self.frequency) for m in masses]


def weight_target(m1: float, mn: float, seg: float = 5.0, sample_rate: float = 25.0) -> TargetSignal:
    if seg <= 0:
        raise ValueError("segment length must be positive")
    if m1 == mn:
        raise ValueError("the two training masses must differ")
    rows = int(round(seg * sample_rate))
    return TargetSignal.piecewise([m1, mn], rows, "weight")


def estimate_weight(test_S: StateMatrix, W: ReadoutWeights, task: str | None = None) -> float:
    """Mean reservoir output over the test window (grams)."""
    return float(np.mean(reservoir_output(test_S, W)[:, _column(W, task)]))


def _train_weight(spec: WeightTaskSpec, provider: TrajectoryProvider, channels=None):
    p = spec.protocol
    m1, mn = spec.train_masses
    parts = [_restrict(p.window(provider.get(p.condition(m, spec.train_position, spec.frequency))), channels)
             for m in (m1, mn)]
    S = stack_segments(parts)
    Y = weight_target(m1, mn, (p.duration - p.head - p.tail), p.sample_rate)
    return S, Y, train_readout(S, Y, p.lam)


def run_weight_task(spec: WeightTaskSpec, provider: TrajectoryProvider, channels=None) -> TaskResult:
    p = spec.protocol
    provider.prefetch(spec.conditions())
    S, Y, W = _train_weight(spec, provider, channels)
    train_out = reservoir_output(S, W)[:, 0]
    half = S.n_rows // 2
    predictions = []
    for m, seg in zip(spec.train_masses, (slice(0, half), slice(half, None))):
        est = float(train_out[seg].mean())
        predictions.append({"mass": m, "role": "train", "prediction": est, "relative_error": abs(est - m) / m})
    frames_y, frames_t = [], []
    outputs = {}
    for m in spec.test_masses:
        cond = p.condition(m, spec.train_position, spec.frequency)
        traj = provider.get(cond)
        test_S = _restrict(p.window(traj), channels)
        y = reservoir_output(test_S, W)[:, 0]
        est = float(y.mean())
        err = abs(est - m) / m
        predictions.append({
            "mass": m,
            "role": "test",
            "trajectory": traj.trajectory_id,
            "prediction": est,
            "relative_error": err,
            "rmse": rmse(np.full_like(y, m), y),
            "success": bool(err < spec.success_threshold),
            "interpolation": bool(min(spec.train_masses) < m < max(spec.train_masses)),
        })
        frames_y.append(y)
        frames_t.append(np.full_like(y, m))
        outputs[m] = y
    tests = [q for q in predictions if q["role"] == "test"]
    lo, hi = sorted(spec.train_masses)
    inside = sorted((q["mass"], q["prediction"]) for q in tests if lo <= q["mass"] <= hi)
    ordered = all(b[1] > a[1] for a, b in zip(inside, inside[1:]))
    interp = [q for q in tests if q["interpolation"]]
    metrics = {
        "rmse_frames": rmse(np.concatenate(frames_t), np.concatenate(frames_y)) if tests else None,
        "rmse_estimates": rmse([q["mass"] for q in tests], [q["prediction"] for q in tests]) if tests else None,
        "successes": sum(q["success"] for q in tests),
        "tests": len(tests),
        "interpolation_successes": sum(q["success"] for q in interp),
        "interpolation_tests": len(interp),
        "separable": bool(ordered),
        "train_rmse": rmse(Y.values[:, 0], train_out),
        "train_max_relative_error": max(q["relative_error"] for q in predictions if q["role"] == "train"),
    }
    rate = p.sample_rate
    series = {"train": _series(np.arange(S.n_rows) / rate, train_out, Y.values[:, 0], ["weight"])}
    if outputs:
        masses = sorted(outputs)
        y = np.concatenate([outputs[m] for m in masses])
        series["test"] = _series(np.arange(len(y)) / rate, y, np.repeat(masses, [len(outputs[m]) for m in masses]), ["weight"])
    return TaskResult("weight", _spec_dict(spec), predictions, metrics, W, series)


def weight_matrix_experiment(
    first_mass: float = 3.0,
    second_masses: Sequence[float] = tuple(float(m) for m in range(4, 19)),
    test_masses: Sequence[float] = tuple(float(m) for m in range(3, 19)),
    frequency: float = 3.0,
    position: str = "a",
    protocol: RunProtocol = RunProtocol(),
    provider: TrajectoryProvider | None = None,
    success_threshold: float = 0.30,
) -> TaskResult:
    """Train on every (first, second) pair and score every test mass."""
    all_masses = sorted(set([first_mass, *second_masses, *test_masses]))
    provider.prefetch([protocol.condition(m, position, frequency) for m in all_masses])
    pred = np.zeros((len(second_masses), len(test_masses)))
    ok = np.zeros_like(pred, dtype=bool)
    counts = {"interpolation": [0, 0], "extrapolation": [0, 0], "training": [0, 0]}
    for i, mn in enumerate(second_masses):
        spec = WeightTaskSpec((first_mass, mn), position, frequency, tuple(test_masses), success_threshold, protocol)
        _, _, W = _train_weight(spec, provider)
        for j, m in enumerate(test_masses):
            est = estimate_weight(protocol.window(provider.get(protocol.condition(m, position, frequency))), W)
            pred[i, j] = est
            ok[i, j] = abs(est - m) / m < success_threshold
            lo, hi = sorted((first_mass, mn))
            kind = "training" if m in (first_mass, mn) else ("interpolation" if lo < m < hi else "extrapolation")
            counts[kind][0] += int(ok[i, j])
            counts[kind][1] += 1
    rates = {k: (v[0] / v[1] if v[1] else None) for k, v in counts.items()}
    metrics = {
        "interpolation_success_rate": rates["interpolation"],
        "extrapolation_success_rate": rates["extrapolation"],
        "training_success_rate": rates["training"],
        "counts": counts,
        "successes_per_row": ok.sum(axis=1).tolist(),
    }
    tables = {
        "success_matrix": {
            "row_label": "second_training_mass",
            "col_label": "test_mass",
            "rows": list(map(float, second_masses)),
            "cols": list(map(float, test_masses)),
            "prediction": pred.tolist(),
            "success": ok.tolist(),
        }
    }
    spec = {
        "first_mass": first_mass,
        "second_masses": list(second_masses),
        "test_masses": list(test_masses),
        "frequency": frequency,
        "position": position,
        "success_threshold": success_threshold,
        "protocol": asdict(protocol),
    }
    return TaskResult("weight_matrix", spec, [], metrics, None, {}, tables)


# -- payload position -----------------------------------------------------------------


@dataclass(frozen=True)
class PositionTaskSpec:
    payload_mass: float = 16.0
    frequency: float = 5.0
    train_positions: tuple[str, str] = ("a", "h")
    test_positions: tuple[str, ...] = tuple("bcdefg")
    protocol: RunProtocol = RunProtocol()

    def __post_init__(self):
        if tuple(self.train_positions) != ("a", "h"):
            raise ValueError("training uses the two extreme stations a and h")

    def conditions(self) -> list[Condition]:
        labels = list(self.train_positions) + list(self.test_positions)
        return [self.protocol.condition(self.payload_mass, lab, self.frequency) for lab in labels]


def position_target(seg: float = 5.0, sample_rate: float = 25.0) -> TargetSignal:
    if seg <= 0:
        raise ValueError("segment length must be positive")
    return TargetSignal.piecewise([-1.0, 1.0], int(round(seg * sample_rate)), "position")


def station_side(label: str, n_labels: int = len(POSITION_LABELS)) -> str:
    """Ground-truth half of the top edge for a station label."""
    k = POSITION_LABELS.index(label)
    return LEFT if k < (n_labels - 1) / 2 else RIGHT


def classify_position(test_S: StateMatrix, W: ReadoutWeights, task: str | None = None) -> tuple[str, float]:
    """Left when the mean output is negative, Right otherwise (0 counts as Right)."""
    mean = float(np.mean(reservoir_output(test_S, W)[:, _column(W, task)]))
    return (LEFT if mean < 0 else RIGHT), mean


def run_position_task(spec: PositionTaskSpec, provider: TrajectoryProvider, channels=None) -> TaskResult:
    p = spec.protocol
    provider.prefetch(spec.conditions())
    parts = [_restrict(p.window(provider.get(p.condition(spec.payload_mass, lab, spec.frequency))), channels)
             for lab in spec.train_positions]
    S = stack_segments(parts)
    Y = position_target(p.duration - p.head - p.tail, p.sample_rate)
    W = train_readout(S, Y, p.lam)
    predictions = []
    for lab in list(spec.train_positions) + list(spec.test_positions):
        traj = provider.get(p.condition(spec.payload_mass, lab, spec.frequency))
        side, mean = classify_position(_restrict(p.window(traj), channels), W)
        truth = station_side(lab)
        predictions.append({
            "position": lab,
            "role": "train" if lab in spec.train_positions else "test",
            "trajectory": traj.trajectory_id,
            "mean_output": mean,
            "prediction": side,
            "truth": truth,
            "correct": side == truth,
        })
    tests = [q for q in predictions if q["role"] == "test"]
    metrics = {
        "correct": sum(q["correct"] for q in tests),
        "tests": len(tests),
        "accuracy": sum(q["correct"] for q in tests) / len(tests) if tests else None,
        "train_rmse": rmse(Y.values[:, 0], reservoir_output(S, W)[:, 0]),
    }
    out = reservoir_output(S, W)[:, 0]
    series = {"train": _series(np.arange(S.n_rows) / p.sample_rate, out, Y.values[:, 0], ["position"])}
    return TaskResult("position", _spec_dict(spec), predictions, metrics, W, series)


def position_grid_experiment(masses: Sequence[float], frequencies: Sequence[float],
                             provider: TrajectoryProvider, protocol: RunProtocol = RunProtocol()) -> TaskResult:
    """Mean-output colour map (rows = masses, columns = stations a-h) per frequency."""
    specs = [PositionTaskSpec(m, f, protocol=protocol) for f in frequencies for m in masses]
    provider.prefetch([c for s in specs for c in s.conditions()])
    tables, predictions, per_freq = {}, [], {}
    for f in frequencies:
        grid, correct, total = [], 0, 0
        for m in masses:
            res = run_position_task(PositionTaskSpec(m, f, protocol=protocol), provider)
            row = {q["position"]: q["mean_output"] for q in res.predictions}
            grid.append([row[lab] for lab in POSITION_LABELS])
            for q in res.predictions:
                predictions.append({"mass": m, "frequency": f, **q})
            correct += res.metrics["correct"]
            total += res.metrics["tests"]
        tables[f"colormap_{f:g}Hz"] = {
            "row_label": "payload_mass",
            "col_label": "position",
            "rows": list(map(float, masses)),
            "cols": list(POSITION_LABELS),
            "mean_output": grid,
        }
        per_freq[f"{f:g}"] = {"correct": correct, "tests": total, "error_rate": 1 - correct / total}
    spec = {"masses": list(masses), "frequencies": list(frequencies), "protocol": asdict(protocol)}
    return TaskResult("position_grid", spec, predictions, {"per_frequency": per_freq}, None, {}, tables)


# -- input pattern recognition ------------------------------------------------------


@dataclass(frozen=True)
class PatternTaskSpec:
    mode: str = "frequency"
    train_patterns: tuple[float, ...] = (4.0, 2.0, 6.0)
    fixed_frequency: float = 4.0
    fixed_level: float = 2
    payload: tuple[float, str] = (6.0, "a")
    segment: float = 5.0
    lead_in: float = 5.0
    test_sequence: tuple[tuple[float, float], ...] | None = None  # (value, duration s)
    test_segments: int = 10
    test_duration_range: tuple[float, float] = (1.0, 4.0)
    averaging_window: float = 0.2
    protocol: RunProtocol = RunProtocol()

    def __post_init__(self):
        if self.mode not in ("frequency", "amplitude"):
            raise ValueError("mode must be 'frequency' or 'amplitude'")
        if self.averaging_window <= 0:
            raise ValueError("averaging window must be positive")
        if self.segment <= 0:
            raise ValueError("training segments must be positive")

    @classmethod
    def amplitude_mode(cls, **kw) -> "PatternTaskSpec":
        return cls(mode="amplitude", train_patterns=(2, 1, 4), **kw)

    def drive(self, value) -> tuple[float, float]:
        """(amplitude mm, frequency Hz) for a pattern value."""
        p = self.protocol
        if self.mode == "frequency":
            return p.amplitude_of(self.fixed_level), float(value)
        return p.amplitude_of(value), float(self.fixed_frequency)

    def sequence_condition(self, values_durations, mass=None, position=None) -> Condition:
        segs = []
        for i, (v, d) in enumerate(values_durations):
            a, f = self.drive(v)
            segs.append((a, f, d + (self.lead_in if i == 0 else 0.0)))
        m, pos = self.payload
        return make_condition(m if mass is None else mass, pos if position is None else position, segs,
                              self.protocol.seed)

    def train_condition(self, mass=None, position=None) -> Condition:
        return self.sequence_condition([(v, self.segment) for v in self.train_patterns], mass, position)

    def test_values(self) -> tuple[tuple[float, float], ...]:
        if self.test_sequence is not None:
            return tuple((float(v), float(d)) for v, d in self.test_sequence)
        return random_pattern_sequence(self.train_patterns, self.test_segments, self.test_duration_range,
                                       self.protocol.seed, self.protocol.sample_rate,
                                       {float(v): self.drive(v)[1] for v in self.train_patterns})

    def test_condition(self, mass=None, position=None) -> Condition:
        return self.sequence_condition(self.test_values(), mass, position)


def segment_step(frequency: float, sample_rate: float) -> float:
    """Shortest duration holding whole drive cycles and whole frames."""
    period = Fraction(1.0 / frequency).limit_denominator(10_000)
    frame = Fraction(1.0 / sample_rate).limit_denominator(10_000)
    step = Fraction(lcm(period.numerator, frame.numerator), gcd(period.denominator, frame.denominator))
    return float(step)


def random_pattern_sequence(values, n_segments: int, duration_range=(1.0, 4.0), seed: int = 0,
                            sample_rate: float = 25.0, frequencies: dict | None = None
                            ) -> tuple[tuple[float, float], ...]:
    """Seeded symbol sequence; consecutive symbols differ.

    Durations snap to frames and, when ``frequencies`` maps each symbol to its
    drive frequency, to whole drive cycles so every switch happens at a zero
    crossing of the base motion.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    values = [float(v) for v in values]
    out, prev = [], None
    for _ in range(n_segments):
        choices = [v for v in values if v != prev] or values
        v = choices[int(rng.integers(len(choices)))]
        d = float(rng.uniform(*duration_range))
        step = segment_step(frequencies[v], sample_rate) if frequencies else 1.0 / sample_rate
        d = max(1, round(d / step)) * step
        out.append((v, d))
        prev = v
    return tuple(out)


def pattern_target(spec: PatternTaskSpec, sample_rate: float | None = None) -> TargetSignal:
    rate = spec.protocol.sample_rate if sample_rate is None else sample_rate
    rows = int(round(spec.segment * rate))
    return TargetSignal.piecewise(list(spec.train_patterns), rows, spec.mode)


def _sequence_target(values_durations, rate) -> np.ndarray:
    counts = [int(round(d * rate)) for _, d in values_durations]
    return np.repeat([float(v) for v, _ in values_durations], counts)


def _window_frames(window: float, rate: float) -> int:
    n = window * rate
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9:
        raise ValueError(f"window {window} s is not a whole number of {1 / rate:g} s frames")
    return k


def block_average(y: np.ndarray, frames: int) -> np.ndarray:
    n = len(y) // frames
    if n < 1:
        raise InsufficientSamples("series shorter than one averaging window")
    return y[: n * frames].reshape(n, frames).mean(axis=1)


def recognize_pattern(test_S: StateMatrix, W: ReadoutWeights, window: float = 0.2,
                      trained_values: Sequence[float] | None = None, task: str | None = None) -> dict:
    """Block-average the per-frame output and snap each window to a trained value."""
    rate = test_S.sample_rate
    frames = _window_frames(window, rate)
    y = reservoir_output(test_S, W)[:, _column(W, task)]
    est = block_average(y, frames)
    centers = (np.arange(len(est)) * frames + (frames - 1) / 2) / rate
    out = {"t": centers, "estimate": est, "frames": frames, "output": y}
    if trained_values is not None:
        tv = np.asarray(trained_values, dtype=float)
        out["classification"] = tv[np.argmin(np.abs(est[:, None] - tv[None, :]), axis=1)]
    return out


def score_windows(classification: np.ndarray, truth_frames: np.ndarray, frames: int) -> dict:
    """Accuracy over windows that do not straddle a symbol change."""
    n = len(classification)
    blocks = truth_frames[: n * frames].reshape(n, frames)
    majority = np.array([_majority(b) for b in blocks])
    boundary = np.array([len(np.unique(b)) > 1 for b in blocks])
    keep = ~boundary
    correct = classification[keep] == majority[keep]
    return {
        "majority": majority,
        "boundary": boundary,
        "accuracy": float(correct.mean()) if keep.any() else None,
        "windows": int(keep.sum()),
        "boundary_windows": int(boundary.sum()),
    }


def _majority(block):
    vals, counts = np.unique(block, return_counts=True)
    return vals[np.argmax(counts)]


def _train_pattern(spec: PatternTaskSpec, provider, channels=None, mass=None, position=None):
    p = spec.protocol
    traj = provider.get(spec.train_condition(mass, position))
    S = _restrict(trim_washout(traj, spec.lead_in, 0.0), channels)
    Y = pattern_target(spec, p.sample_rate)
    if S.n_rows != Y.n_rows:
        raise DimensionMismatch(f"training window {S.n_rows} rows, target {Y.n_rows} rows")
    return S, Y, traj


def run_pattern_task(spec: PatternTaskSpec, provider: TrajectoryProvider, channels=None) -> TaskResult:
    p = spec.protocol
    rate = p.sample_rate
    provider.prefetch([spec.train_condition(), spec.test_condition()])
    S, Y, train_traj = _train_pattern(spec, provider, channels)
    W = train_readout(S, Y, p.lam)
    train_out = reservoir_output(S, W)[:, 0]

    seq = spec.test_values()
    test_traj = provider.get(spec.test_condition())
    test_S = _restrict(trim_washout(test_traj, spec.lead_in, 0.0), channels)
    truth = _sequence_target(seq, rate)
    if len(truth) != test_S.n_rows:
        raise DimensionMismatch("test target and test window differ in length")
    rec = recognize_pattern(test_S, W, spec.averaging_window, spec.train_patterns)
    score = score_windows(rec["classification"], truth, rec["frames"])
    keep = ~score["boundary"]
    metrics = {
        "train_rmse": rmse(Y.values[:, 0], train_out),
        "test_rmse_frames": rmse(truth, rec["output"]),
        "test_rmse_windows": rmse(score["majority"][keep], rec["estimate"][keep]) if keep.any() else None,
        "window_accuracy": score["accuracy"],
        "windows": score["windows"],
        "boundary_windows": score["boundary_windows"],
    }
    predictions = [
        {"t": float(t), "estimate": float(e), "classification": float(c), "truth": float(m), "boundary": bool(b)}
        for t, e, c, m, b in zip(rec["t"], rec["estimate"], rec["classification"], score["majority"], score["boundary"])
    ]
    for q in predictions:
        q["trajectory"] = test_traj.trajectory_id
    series = {
        "train": _series(np.arange(S.n_rows) / rate, train_out, Y.values[:, 0], [spec.mode]),
        "test": _series(np.arange(test_S.n_rows) / rate, rec["output"], truth, [spec.mode]),
        "test_windows": _series(rec["t"], rec["estimate"], score["majority"], [spec.mode]),
    }
    return TaskResult(f"pattern_{spec.mode}", _spec_dict(spec), predictions, metrics, W, series)


def baseline_bottom_nodes(spec: PatternTaskSpec, provider: TrajectoryProvider,
                          channels: Sequence[int] = BOTTOM_BASELINE_CHANNELS) -> TaskResult:
    """Same protocol with the readout restricted to the bottom-row nodes nearest the clamp."""
    res = run_pattern_task(spec, provider, channels=tuple(channels))
    res.task = f"baseline_{spec.mode}"
    res.metrics["channels"] = list(channels)
    return res


def compare_with_baseline(spec: PatternTaskSpec, provider: TrajectoryProvider) -> TaskResult:
    full = run_pattern_task(spec, provider)
    base = baseline_bottom_nodes(spec, provider)
    metrics = {
        "reservoir": full.metrics,
        "baseline": base.metrics,
        "train_rmse_ratio": base.metrics["train_rmse"] / full.metrics["train_rmse"],
        "test_rmse_ratio": base.metrics["test_rmse_frames"] / full.metrics["test_rmse_frames"],
    }
    series = {}
    for tag, res in (("reservoir", full), ("baseline", base)):
        for name, s in res.series.items():
            series[f"{tag}_{name}"] = s
    return TaskResult(f"pattern_{spec.mode}_vs_baseline", _spec_dict(spec), full.predictions, metrics,
                      full.weights, series)


# -- multi-tasking -------------------------------------------------------------------


def train_multitask(S: StateMatrix, Yhat: TargetSignal, lam: float = 0.0) -> ReadoutWeights:
    if Yhat.values.shape[1] != 2:
        raise DimensionMismatch("multitask training expects exactly two target columns")
    return train_readout(S, Yhat, lam)


@dataclass(frozen=True)
class WeightPositionSpec:
    train_masses: tuple[float, float] = (8.0, 17.0)
    train_positions: tuple[str, str] = ("a", "h")
    frequency: float = 3.0
    tests: tuple[tuple[float, str], ...] = ((16.0, "b"), (9.0, "g"), (9.0, "b"), (11.0, "c"))
    protocol: RunProtocol = RunProtocol()


@dataclass(frozen=True)
class WeightFrequencySpec:
    train_masses: tuple[float, float] = (15.0, 3.0)
    train_frequencies: tuple[float, ...] = (4.0, 2.0, 6.0)
    position: str = "a"
    tests: tuple[tuple[float, float], ...] = ((6.0, 2.0), (6.0, 6.0), (9.0, 4.0), (9.0, 6.0))
    protocol: RunProtocol = RunProtocol()


def _joint_vs_independent(S, Y, lam):
    """Joint weights plus the largest absolute and scale-relative gap to per-column fits."""
    W = train_multitask(S, Y, lam)
    diffs = []
    for j, lab in enumerate(Y.labels):
        Wj = train_readout(S, TargetSignal(Y.values[:, j], (lab,)), lam)
        diffs.append(float(np.max(np.abs(np.concatenate([[W.bias[j] - Wj.bias[0]], W.weights[:, j] - Wj.weights[:, 0]])))))
    scale = max(float(np.abs(W.weights).max(initial=0.0)), float(np.abs(W.bias).max()))
    return W, max(diffs), max(diffs) / scale if scale > 0 else 0.0


def run_weight_position_multitask(spec: WeightPositionSpec, provider: TrajectoryProvider) -> TaskResult:
    p = spec.protocol
    rows = p.window_rows
    groups = [(m, pos) for pos in spec.train_positions for m in spec.train_masses]
    conds = [p.condition(m, pos, spec.frequency) for m, pos in groups]
    provider.prefetch(conds + [p.condition(m, pos, spec.frequency) for m, pos in spec.tests])
    S = stack_segments([p.window(provider.get(c)) for c in conds])
    weight = TargetSignal.piecewise([m for m, _ in groups], rows, "weight")
    side = TargetSignal.piecewise([-1.0 if pos == spec.train_positions[0] else 1.0 for _, pos in groups], rows, "position")
    Y = TargetSignal.stack_columns([weight, side])
    W, diff, rel_diff = _joint_vs_independent(S, Y, p.lam)
    predictions = []
    for m, pos in spec.tests:
        traj = provider.get(p.condition(m, pos, spec.frequency))
        test_S = p.window(traj)
        est = estimate_weight(test_S, W, "weight")
        cls, mean = classify_position(test_S, W, "position")
        predictions.append({
            "mass": m,
            "position": pos,
            "trajectory": traj.trajectory_id,
            "weight_prediction": est,
            "weight_relative_error": abs(est - m) / m,
            "position_output": mean,
            "position_prediction": cls,
            "position_truth": station_side(pos),
        })
    out = reservoir_output(S, W)
    metrics = {
        "train_rows": S.n_rows,
        "joint_vs_independent_max_diff": diff,
        "joint_vs_independent_relative_diff": rel_diff,
        "train_rmse_weight": rmse(Y.values[:, 0], out[:, 0]),
        "train_rmse_position": rmse(Y.values[:, 1], out[:, 1]),
        "weight_within_10pct": sum(q["weight_relative_error"] < 0.10 for q in predictions),
        "position_correct": sum(q["position_prediction"] == q["position_truth"] for q in predictions),
        "tests": len(predictions),
    }
    series = {"train": _series(np.arange(S.n_rows) / p.sample_rate, out, Y.values, Y.labels)}
    return TaskResult("multitask_weight_position", _spec_dict(spec), predictions, metrics, W, series)


def run_weight_frequency_multitask(spec: WeightFrequencySpec, provider: TrajectoryProvider) -> TaskResult:
    p = spec.protocol
    rows = p.window_rows
    groups = [(m, f) for m in spec.train_masses for f in spec.train_frequencies]
    conds = [p.condition(m, spec.position, f) for m, f in groups]
    provider.prefetch(conds + [p.condition(m, spec.position, f) for m, f in spec.tests])
    S = stack_segments([p.window(provider.get(c)) for c in conds])
    weight = TargetSignal.piecewise([m for m, _ in groups], rows, "weight")
    freq = TargetSignal.piecewise([f for _, f in groups], rows, "frequency")
    Y = TargetSignal.stack_columns([weight, freq])
    W, diff, rel_diff = _joint_vs_independent(S, Y, p.lam)
    tv = np.asarray(spec.train_frequencies, dtype=float)
    predictions = []
    for m, f in spec.tests:
        traj = provider.get(p.condition(m, spec.position, f))
        test_S = p.window(traj)
        est_m = estimate_weight(test_S, W, "weight")
        est_f = estimate_weight(test_S, W, "frequency")
        predictions.append({
            "mass": m,
            "frequency": f,
            "trajectory": traj.trajectory_id,
            "weight_prediction": est_m,
            "weight_relative_error": abs(est_m - m) / m,
            "frequency_prediction": est_f,
            "frequency_class": float(tv[np.argmin(np.abs(tv - est_f))]),
        })
    out = reservoir_output(S, W)
    metrics = {
        "train_rows": S.n_rows,
        "joint_vs_independent_max_diff": diff,
        "joint_vs_independent_relative_diff": rel_diff,
        "train_rmse_weight": rmse(Y.values[:, 0], out[:, 0]),
        "train_rmse_frequency": rmse(Y.values[:, 1], out[:, 1]),
        "weight_within_10pct": sum(q["weight_relative_error"] < 0.10 for q in predictions),
        "frequency_correct": sum(q["frequency_class"] == q["frequency"] for q in predictions),
        "tests": len(predictions),
    }
    series = {"train": _series(np.arange(S.n_rows) / p.sample_rate, out, Y.values, Y.labels)}
    return TaskResult("multitask_weight_frequency", _spec_dict(spec), predictions, metrics, W, series)


# -- reduced dimensionality -------------------------------------------------------------

SWEEP_COUNTS = (4, 8, 12, 16, 20, 24, 28)


def _subset_seed(seed: int, count: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(count), int(trial)]).generate_state(1)[0])


def _weight_sweep_error(spec: WeightTaskSpec, provider, channels) -> float:
    return run_weight_task(spec, provider, channels).metrics["rmse_frames"]


def _pattern_sweep_error(spec: PatternTaskSpec, provider, channels) -> float:
    return run_pattern_task(spec, provider, channels).metrics["test_rmse_windows"]


def dimensionality_sweep(task_spec, provider: TrajectoryProvider, counts: Sequence[int] = SWEEP_COUNTS,
                         trials: int = 5, seed: int = 0, n_channels: int = 28) -> TaskResult:
    """Task error against the number of randomly chosen node channels."""
    if trials < 1:
        raise ValueError("need at least one trial per count")
    if isinstance(task_spec, WeightTaskSpec):
        kind, error = "weight", _weight_sweep_error
        provider.prefetch(task_spec.conditions())
    elif isinstance(task_spec, PatternTaskSpec):
        kind, error = f"pattern_{task_spec.mode}", _pattern_sweep_error
        provider.prefetch([task_spec.train_condition(), task_spec.test_condition()])
    else:
        raise TypeError(f"unsupported task spec {type(task_spec).__name__}")
    all_channels = tuple(range(n_channels))
    curve, predictions = [], []
    for count in counts:
        n_trials = 1 if count >= n_channels else trials
        errs = []
        for trial in range(n_trials):
            subset = all_channels if count >= n_channels else random_subset(all_channels, count, _subset_seed(seed, count, trial))
            e = error(task_spec, provider, subset)
            errs.append(e)
            predictions.append({"count": count, "trial": trial, "channels": list(subset), "rmse": e})
        curve.append({
            "count": int(count),
            "fraction": count / n_channels,
            "mean_rmse": float(np.mean(errs)),
            "std_rmse": float(np.std(errs)),
            "min_rmse": float(np.min(errs)),
            "max_rmse": float(np.max(errs)),
            "trials": n_trials,
        })
    means = [c["mean_rmse"] for c in curve]
    full = curve[-1]["mean_rmse"] if counts[-1] >= n_channels else None
    metrics = {
        "spearman": spearman(list(counts), means),
        "full_rmse": full,
        "first_count_within_2x": next((c["count"] for c in curve if full is not None and c["mean_rmse"] <= 2 * full), None),
    }
    spec = {"task": kind, "task_spec": _spec_dict(task_spec), "counts": list(counts), "trials": trials, "seed": seed}
    tables = {"rmse_vs_count": {"curve": curve}}
    return TaskResult(f"sweep_{kind}", spec, predictions, metrics, None, {}, tables)


def _spec_dict(spec) -> dict:
    return json.loads(json.dumps(asdict(spec), default=str))
