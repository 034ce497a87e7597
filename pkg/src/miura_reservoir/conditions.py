"""Experimental conditions and a caching trajectory provider.

A condition is one shaker run: payload mass and station plus the excitation
segments. Seeds are derived from a base seed and the condition content so a
condition gets the same trajectory whether it comes from a campaign or is
simulated on demand by a task.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Protocol

from .dynamics import (
    DEFAULT_DT,
    DEFAULT_SAMPLE_RATE,
    ExcitationSpec,
    PayloadSpec,
    ReservoirModel,
    Trajectory,
    attach_payload,
    simulate,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Condition:
    mass: float
    position: str
    segments: tuple[tuple[float, float, float], ...]  # (amplitude mm, frequency Hz, duration s)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "segments", tuple((float(a), float(f), float(d)) for a, f, d in self.segments))

    @property
    def excitation(self) -> ExcitationSpec:
        return ExcitationSpec(self.segments)

    @property
    def duration(self) -> float:
        return sum(d for _, _, d in self.segments)

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "position": self.position,
            "segments": [list(s) for s in self.segments],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        return cls(d["mass"], d["position"], tuple(tuple(s) for s in d["segments"]), int(d.get("seed", 0)))

    def key(self, model_hash: str = "") -> str:
        blob = json.dumps({"c": self.to_dict(), "m": model_hash}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:20]

    def label(self) -> str:
        segs = "+".join(f"{a:g}mm@{f:g}Hz/{d:g}s" for a, f, d in self.segments)
        return f"{self.mass:g}g@{self.position}:{segs}"


def derive_seed(base_seed: int, mass: float, position: str, segments) -> int:
    blob = json.dumps(
        [int(base_seed), float(mass), position, [[float(x) for x in s] for s in segments]]
    ).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "little")


def make_condition(mass, position, segments, base_seed: int = 0) -> Condition:
    segments = tuple(tuple(s) for s in segments)
    return Condition(mass, position, segments, derive_seed(base_seed, mass, position, segments))


def sine_condition(mass, position, amplitude, frequency, duration=15.0, base_seed: int = 0) -> Condition:
    return make_condition(mass, position, ((amplitude, frequency, duration),), base_seed)


class TrajectoryProvider(Protocol):
    def get(self, condition: Condition) -> Trajectory: ...

    def prefetch(self, conditions: Iterable[Condition]) -> None: ...


@dataclass(frozen=True)
class SimulationSettings:
    sample_rate: float = DEFAULT_SAMPLE_RATE
    dt: float = DEFAULT_DT
    settle_time: float = 2.0

    def to_dict(self) -> dict:
        return {"sample_rate": self.sample_rate, "dt": self.dt, "settle_time": self.settle_time}


def run_condition(model: ReservoirModel, condition: Condition, settings: SimulationSettings) -> Trajectory:
    loaded = attach_payload(model, PayloadSpec(condition.mass, condition.position))
    traj = simulate(
        loaded,
        condition.excitation,
        sample_rate=settings.sample_rate,
        seed=condition.seed,
        dt=settings.dt,
        settle_time=settings.settle_time,
    )
    traj.metadata["condition"] = condition.to_dict()
    traj.metadata["id"] = condition.key(model.model_hash())
    traj.metadata["base_model_hash"] = model.model_hash()
    return traj


def _worker(args):
    model, condition, settings = args
    return run_condition(model, condition, settings)


class Simulator:
    """Simulate conditions on demand, memoising in memory and optionally on disk.

    ``store`` is any object with ``load(condition, model_hash)`` returning a
    trajectory or None, and ``save(condition, model_hash, trajectory)``.
    """

    def __init__(self, model: ReservoirModel, settings: SimulationSettings | None = None,
                 store=None, workers: int = 1):
        self.model = model
        self.settings = settings or SimulationSettings()
        self.store = store
        self.workers = max(1, int(workers))
        self._cache: dict[Condition, Trajectory] = {}
        self.simulated = 0

    @property
    def model_hash(self) -> str:
        return self.model.model_hash()

    def _lookup(self, condition: Condition) -> Trajectory | None:
        if condition in self._cache:
            return self._cache[condition]
        if self.store is not None:
            traj = self.store.load(condition, self.model_hash)
            if traj is not None:
                self._cache[condition] = traj
                return traj
        return None

    def _keep(self, condition: Condition, traj: Trajectory) -> None:
        self._cache[condition] = traj
        if self.store is not None:
            self.store.save(condition, self.model_hash, traj)

    def get(self, condition: Condition) -> Trajectory:
        traj = self._lookup(condition)
        if traj is None:
            log.debug("simulating %s", condition.label())
            traj = run_condition(self.model, condition, self.settings)
            self.simulated += 1
            self._keep(condition, traj)
        return traj

    def prefetch(self, conditions: Iterable[Condition]) -> None:
        todo = []
        for c in dict.fromkeys(conditions):
            if self._lookup(c) is None:
                todo.append(c)
        if not todo:
            return
        if self.workers == 1 or len(todo) == 1:
            for c in todo:
                self.get(c)
            return
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            jobs = [(self.model, c, self.settings) for c in todo]
            for c, traj in zip(todo, pool.map(_worker, jobs)):
                self.simulated += 1
                self._keep(c, traj)
