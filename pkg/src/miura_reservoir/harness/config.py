"""Versioned JSON experiment configuration."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..conditions import Condition, SimulationSettings, make_condition
from ..dynamics import (
    DEFAULT_AMPLITUDE_LEVELS,
    POSITION_LABELS,
    ReservoirModel,
    amplitude_for_level,
    default_model,
)
from ..errors import ConfigError

SCHEMA_VERSION = 1

# seven drive frequencies used in the bench campaign; the nominal "1 to 6 Hz"
# range is not evenly spaced
BENCH_FREQUENCIES = (1.0, 1.5, 2.0, 3.5, 4.0, 5.5, 6.0)
BENCH_MASSES = tuple(float(m) for m in range(3, 19))
DESK_MASSES = (3.0, 6.0, 9.0, 12.0, 15.0, 18.0)
DESK_POSITIONS = ("a", "c", "f", "h")
DESK_FREQUENCIES = (1.0, 3.0, 6.0)


@dataclass
class ModelConfig:
    rows: int = 4
    cols: int = 7
    panel_a: float = 20.0
    panel_b: float = 20.0
    gamma: float = 60.0
    fold_angle: float = 50.0
    sheet_mass_g: float = 6.0
    bar_stiffness: float = 2000.0
    crease_hinge_stiffness: float = 70.65
    facet_hinge_stiffness: float = 14.13
    clamp_hinge_stiffness: float = 2000.0
    rayleigh_alpha: float = 12.0
    rayleigh_beta: float = 1e-5
    gravity: float = 9.81

    def build(self) -> ReservoirModel:
        d = asdict(self)
        geometry = {k: d.pop(k) for k in ("rows", "cols", "panel_a", "panel_b", "gamma", "fold_angle", "sheet_mass_g")}
        return default_model(**geometry, **d)


@dataclass
class GridConfig:
    masses: list[float] = field(default_factory=lambda: list(DESK_MASSES))
    positions: list[str] = field(default_factory=lambda: list(DESK_POSITIONS))
    frequencies: list[float] = field(default_factory=lambda: list(DESK_FREQUENCIES))
    level: float = 2
    duration: float = 15.0
    seed: int = 0


@dataclass
class ProtocolConfig:
    head: float = 5.0
    tail: float = 5.0
    lam: float = 0.0


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    amplitude_levels: dict[str, float] = field(
        default_factory=lambda: {str(k): v for k, v in DEFAULT_AMPLITUDE_LEVELS.items()}
    )
    grid: GridConfig = field(default_factory=GridConfig)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    tasks: dict[str, dict] = field(default_factory=dict)
    output_dir: str = "runs"
    workers: int = 0  # 0 = all available cores
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------------
    def validate(self) -> None:
        g = self.grid
        if not (g.masses and g.positions and g.frequencies):
            raise ConfigError("run grid must have at least one mass, position and frequency")
        bad = [p for p in g.positions if p not in POSITION_LABELS or len(p) != 1]
        if bad:
            raise ConfigError(f"unknown payload positions {bad}; expected labels a-h")
        if any(f <= 0 for f in g.frequencies):
            raise ConfigError("frequencies must be positive")
        if any(m < 0 for m in g.masses):
            raise ConfigError("payload masses must be non-negative")
        if g.duration <= self.protocol.head + self.protocol.tail:
            raise ConfigError("run duration must exceed the washout")
        try:
            amplitude_for_level(g.level, self.amplitude_levels)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")

    @property
    def parallelism(self) -> int:
        return self.workers or os.cpu_count() or 1

    @property
    def amplitude(self) -> float:
        return amplitude_for_level(self.grid.level, self.amplitude_levels)

    def conditions(self) -> list[Condition]:
        g = self.grid
        return [
            make_condition(m, p, ((self.amplitude, f, g.duration),), g.seed)
            for f in g.frequencies
            for p in g.positions
            for m in g.masses
        ]

    def build_model(self) -> ReservoirModel:
        return self.model.build()

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "model": asdict(self.model),
            "amplitude_levels": dict(self.amplitude_levels),
            "grid": asdict(self.grid),
            "simulation": asdict(self.simulation),
            "protocol": asdict(self.protocol),
            "tasks": copy.deepcopy(self.tasks),
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        version = d.pop("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {version}; expected {SCHEMA_VERSION}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(
                model=ModelConfig(**d.get("model", {})),
                amplitude_levels={str(k): float(v) for k, v in d.get("amplitude_levels", {}).items()}
                or {str(k): v for k, v in DEFAULT_AMPLITUDE_LEVELS.items()},
                grid=GridConfig(**d.get("grid", {})),
                simulation=SimulationSettings(**d.get("simulation", {})),
                protocol=ProtocolConfig(**d.get("protocol", {})),
                tasks=d.get("tasks", {}),
                output_dir=d.get("output_dir", "runs"),
                workers=int(d.get("workers", 0)),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def with_overrides(self, overrides: list[str]) -> "ExperimentConfig":
        """Apply ``dotted.key=value`` overrides; values parse as JSON when possible."""
        d = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            node = d
            parts = key.strip().split(".")
            free_form = parts[0] == "tasks"  # task parameters are open-ended
            for p in parts[:-1]:
                if free_form and p not in node:
                    node[p] = {}
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section {p!r} in {key!r}")
                node = node[p]
            if parts[-1] not in node and not free_form:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(d)


def bench_grid_config(**kw) -> ExperimentConfig:
    """Full bench-scale grid: 16 masses x 8 stations x 7 frequencies."""
    grid = GridConfig(masses=list(BENCH_MASSES), positions=list(POSITION_LABELS), frequencies=list(BENCH_FREQUENCIES))
    return ExperimentConfig(grid=grid, **kw)
