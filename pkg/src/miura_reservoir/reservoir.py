"""Linear readout over reservoir state matrices.

Training solves ``W = pinv([1 S]) Y`` (or the ridge normal equations with an
unpenalised bias); the reservoir output is ``y = w0 + S w``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import ChannelMismatch, DimensionMismatch, InsufficientSamples, UnknownChannel

PINV_RCOND = 1e-10


@dataclass(frozen=True)
class StateMatrix:
    values: np.ndarray  # (rows, channels)
    channel_map: tuple[int, ...]
    origin: tuple[tuple[str, int, int], ...] = ()  # (trajectory id, start frame, stop frame)
    sample_rate: float = 25.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatch("state matrix must be two-dimensional")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_map", tuple(int(c) for c in self.channel_map))
        if values.shape[1] != len(self.channel_map):
            raise DimensionMismatch("one channel id per column")
        if len(set(self.channel_map)) != len(self.channel_map):
            raise ChannelMismatch("duplicate channel ids")
        if not np.all(np.isfinite(values)):
            raise ValueError("state matrix contains NaN or Inf")
        if self.origin and sum(b - a for _, a, b in self.origin) != values.shape[0]:
            raise DimensionMismatch("origin segments do not cover the rows")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TargetSignal:
    values: np.ndarray  # (rows, tasks)
    labels: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        if values.shape[1] != len(self.labels):
            raise DimensionMismatch("one label per target column")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @classmethod
    def piecewise(cls, levels: Sequence[float], rows_per_level: int | Sequence[int], label: str) -> "TargetSignal":
        counts = [rows_per_level] * len(levels) if np.isscalar(rows_per_level) else list(rows_per_level)
        return cls(np.repeat(np.asarray(levels, dtype=float), counts)[:, None], (label,))

    @classmethod
    def stack_columns(cls, targets: Sequence["TargetSignal"]) -> "TargetSignal":
        rows = {t.n_rows for t in targets}
        if len(rows) != 1:
            raise DimensionMismatch("targets differ in row count")
        return cls(np.hstack([t.values for t in targets]), sum((t.labels for t in targets), ()))


@dataclass(frozen=True)
class ReadoutWeights:
    bias: np.ndarray  # (tasks,)
    weights: np.ndarray  # (channels, tasks)
    channel_map: tuple[int, ...]
    tasks: tuple[str, ...]
    regularization: float = 0.0

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    def column(self, task: str) -> "ReadoutWeights":
        j = self.tasks.index(task)
        return ReadoutWeights(self.bias[j : j + 1], self.weights[:, j : j + 1], self.channel_map, (task,), self.regularization)

    def to_dict(self) -> dict:
        return {
            "tasks": list(self.tasks),
            "bias": self.bias.tolist(),
            "weights": self.weights.tolist(),
            "channel_map": list(self.channel_map),
            "lambda": self.regularization,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutWeights":
        weights = np.asarray(d["weights"], dtype=float).reshape(len(d["channel_map"]), len(d["tasks"]))
        return cls(
            np.asarray(d["bias"], dtype=float),
            weights,
            tuple(int(c) for c in d["channel_map"]),
            tuple(d["tasks"]),
            float(d.get("lambda", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "ReadoutWeights":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trim_washout(traj: Trajectory, head: float = 5.0, tail: float = 5.0) -> StateMatrix:
    """Drop ``head`` and ``tail`` seconds; values are kept in the lab frame."""
    rate = traj.sample_rate
    lo = int(round(head * rate))
    hi = traj.n_samples - int(round(tail * rate))
    if lo < 0 or hi <= lo:
        raise InsufficientSamples(
            f"washout of {head} s + {tail} s leaves no samples of a {traj.duration} s run"
        )
    return StateMatrix(
        traj.states[lo:hi].copy(),
        tuple(range(traj.n_nodes)),
        ((traj.trajectory_id, lo, hi),),
        rate,
    )


def stack_segments(segments: Sequence[StateMatrix]) -> StateMatrix:
    if not segments:
        raise DimensionMismatch("nothing to stack")
    channels = segments[0].channel_map
    for s in segments[1:]:
        if s.channel_map != channels:
            raise ChannelMismatch("segments carry different channel maps")
    origin = tuple(o for s in segments for o in s.origin)
    if sum(b - a for _, a, b in origin) != sum(s.n_rows for s in segments):
        origin = ()
    return StateMatrix(np.vstack([s.values for s in segments]), channels, origin, segments[0].sample_rate)


def design_matrix(S: StateMatrix) -> np.ndarray:
    return np.hstack([np.ones((S.n_rows, 1)), S.values])


def pseudo_inverse(A: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose inverse by SVD, dropping singular values below rcond * s_max."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0:
        return np.zeros(A.T.shape)
    keep = s > rcond * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def train_readout(S: StateMatrix, Y: TargetSignal, lam: float = 0.0, rcond: float = PINV_RCOND) -> ReadoutWeights:
    if S.n_rows != Y.n_rows:
        raise DimensionMismatch(f"state rows {S.n_rows} != target rows {Y.n_rows}")
    if S.n_rows < 1:
        raise DimensionMismatch("need at least one training row")
    if lam < 0:
        raise ValueError("ridge parameter must be non-negative")
    phi = design_matrix(S)
    if lam == 0:
        W = pseudo_inverse(phi, rcond) @ Y.values
    else:
        penalty = np.full(phi.shape[1], float(lam))
        penalty[0] = 0.0
        W = np.linalg.solve(phi.T @ phi + np.diag(penalty), phi.T @ Y.values)
    return ReadoutWeights(W[0].copy(), W[1:].copy(), S.channel_map, Y.labels, float(lam))


def reservoir_output(S: StateMatrix, W: ReadoutWeights) -> np.ndarray:
    """Output series, one column per task."""
    if set(S.channel_map) != set(W.channel_map) or S.n_channels != W.n_channels:
        raise ChannelMismatch("state channels do not match the readout's channel map")
    # evaluate in ascending channel-id order so that consistent permutations
    # of states and weights give bit-identical outputs
    s_order = np.argsort(S.channel_map, kind="stable")
    w_order = np.argsort(W.channel_map, kind="stable")
    return W.bias[None, :] + S.values[:, s_order] @ W.weights[w_order]


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"shapes {y.shape} and {yhat.shape} differ")
    if y.size < 1:
        raise DimensionMismatch("need at least one sample")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def random_subset(channels: Sequence[int], count: int, seed: int) -> tuple[int, ...]:
    if not 1 <= count <= len(channels):
        raise ValueError(f"cannot draw {count} of {len(channels)} channels")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(channels), size=count, replace=False)
    return tuple(int(channels[i]) for i in np.sort(picked))


def select_channels(S: StateMatrix, subset: Sequence[int] | None = None, *, count: int | None = None,
                    seed: int | None = None) -> StateMatrix:
    """Keep the listed channel ids, or ``count`` ids drawn with ``seed``."""
    if subset is None:
        if count is None:
            raise ValueError("give a channel subset or a count")
        subset = random_subset(S.channel_map, count, 0 if seed is None else seed)
    subset = [int(c) for c in subset]
    if not subset:
        raise ValueError("channel subset is empty")
    index = {c: i for i, c in enumerate(S.channel_map)}
    missing = [c for c in subset if c not in index]
    if missing:
        raise UnknownChannel(f"unknown channel ids {missing}")
    cols = [index[c] for c in subset]
    return StateMatrix(S.values[:, cols], tuple(subset), S.origin, S.sample_rate)
