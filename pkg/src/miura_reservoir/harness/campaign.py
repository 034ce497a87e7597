"""Resumable, parallel simulation campaigns over a condition grid."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from ..conditions import Condition, SimulationSettings, run_condition
from ..dynamics import ReservoirModel
from ..errors import IntegrityError, ReservoirError
from .config import ExperimentConfig
from .io import TrajectoryStore, _atomic_write, file_sha256

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRAJECTORY_DIR = "trajectories"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class ManifestEntry:
    condition: Condition
    key: str
    trajectory: str | None = None
    metadata: str | None = None
    csv_sha256: str | None = None
    metadata_sha256: str | None = None
    status: str = "pending"
    error: dict | None = None

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.to_dict(),
            "key": self.key,
            "trajectory": self.trajectory,
            "metadata": self.metadata,
            "csv_sha256": self.csv_sha256,
            "metadata_sha256": self.metadata_sha256,
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(Condition.from_dict(d["condition"]), d["key"], d.get("trajectory"), d.get("metadata"),
                   d.get("csv_sha256"), d.get("metadata_sha256"), d.get("status", "pending"), d.get("error"))


@dataclass
class RunManifest:
    root: Path
    entries: list[ManifestEntry]
    campaign_seed: int
    model_hash: str
    tool_version: str = field(default_factory=tool_version)
    config: dict = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def to_dict(self) -> dict:
        return {
            "campaign_seed": self.campaign_seed,
            "model_hash": self.model_hash,
            "tool_version": self.tool_version,
            "config": self.config,
            "entries": [e.to_dict() for e in self.entries],
        }

    def save(self) -> Path:
        _atomic_write(self.path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return self.path

    @classmethod
    def load(cls, root: str | Path, verify: bool = True) -> "RunManifest":
        root = Path(root)
        path = root / MANIFEST_NAME if root.is_dir() else root
        d = json.loads(path.read_text())
        m = cls(path.parent, [ManifestEntry.from_dict(e) for e in d["entries"]], int(d["campaign_seed"]),
                d["model_hash"], d.get("tool_version", ""), d.get("config", {}))
        if verify:
            m.verify()
        return m

    def entry_ok(self, e: ManifestEntry) -> bool:
        if e.status != "ok" or not e.trajectory or not e.metadata:
            return False
        csv_path, meta_path = self.root / e.trajectory, self.root / e.metadata
        return (csv_path.exists() and meta_path.exists()
                and file_sha256(csv_path) == e.csv_sha256 and file_sha256(meta_path) == e.metadata_sha256)

    def verify(self) -> None:
        """Raise IntegrityError if any completed trajectory no longer matches its hash."""
        bad = [e.key for e in self.entries if e.status == "ok" and not self.entry_ok(e)]
        if bad:
            raise IntegrityError(f"{len(bad)} trajectory file(s) missing or modified: {', '.join(bad[:5])}")

    @property
    def completed(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.status == "ok"]

    @property
    def failed(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.status == "failed"]

    def store(self) -> TrajectoryStore:
        return TrajectoryStore(self.root / TRAJECTORY_DIR)


def _simulate_job(args):
    model, condition, settings = args
    try:
        return run_condition(model, condition, settings), None
    except ReservoirError as exc:
        return None, exc.to_dict()
    except (ValueError, FloatingPointError) as exc:
        return None, {"error": type(exc).__name__, "message": str(exc)}


def run_campaign(config: ExperimentConfig, output_dir: str | Path | None = None,
                 workers: int | None = None, model: ReservoirModel | None = None) -> RunManifest:
    """Simulate every grid condition, skipping ones already on disk with valid hashes."""
    root = Path(output_dir or config.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    model = model or config.build_model()
    settings: SimulationSettings = config.simulation
    model_hash = model.model_hash()
    store = TrajectoryStore(root / TRAJECTORY_DIR)

    previous: dict[str, ManifestEntry] = {}
    if (root / MANIFEST_NAME).exists():
        old = RunManifest.load(root, verify=False)
        previous = {e.key: e for e in old.entries}

    # execution settings stay out of the manifest so outputs do not depend on them
    echo = {k: v for k, v in config.to_dict().items() if k not in ("workers", "output_dir")}
    manifest = RunManifest(root, [], config.grid.seed, model_hash, config=echo)
    todo: list[ManifestEntry] = []
    seen = set()
    for cond in config.conditions():
        key = cond.key(model_hash)
        if key in seen:
            continue
        seen.add(key)
        entry = previous.get(key)
        if entry is not None and manifest.entry_ok(entry):
            manifest.entries.append(entry)
            continue
        entry = ManifestEntry(cond, key)
        manifest.entries.append(entry)
        todo.append(entry)
    log.info("campaign: %d conditions, %d to simulate", len(manifest.entries), len(todo))

    n_workers = workers if workers is not None else config.parallelism
    jobs = [(model, e.condition, settings) for e in todo]
    if n_workers <= 1 or len(jobs) <= 1:
        results = map(_simulate_job, jobs)
        _collect(manifest, store, todo, results)
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            _collect(manifest, store, todo, pool.map(_simulate_job, jobs))
    manifest.save()
    return manifest


def _collect(manifest: RunManifest, store: TrajectoryStore, todo, results) -> None:
    for entry, (traj, error) in zip(todo, results):
        if traj is None:
            entry.status, entry.error = "failed", error
            log.warning("condition %s failed: %s", entry.condition.label(), error)
            continue
        csv_path, meta_path = store.save(entry.condition, manifest.model_hash, traj)
        entry.trajectory = str(csv_path.relative_to(manifest.root))
        entry.metadata = str(meta_path.relative_to(manifest.root))
        entry.csv_sha256 = file_sha256(csv_path)
        entry.metadata_sha256 = file_sha256(meta_path)
        entry.status, entry.error = "ok", None
        manifest.save()

