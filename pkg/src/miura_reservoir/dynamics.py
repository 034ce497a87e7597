"""Bar-and-hinge dynamics of the clamped Miura-ori under base excitation.

The sheet stands upright: rows stack along +y, which is the vertical axis,
gravity points along -y and the shaker drives the clamped nodes along y.
Public arrays are SI internally (m, kg, N, s); trajectories report
displacements in millimetres.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ExcessiveLoadWarning, InsufficientSamples, InvalidPosition, NumericalBlowup
from .geometry import (
    FoldedMesh,
    build_miura_pattern,
    clamped_nodes,
    fold_miura,
    top_edge_nodes,
)

VERTICAL_AXIS = 1
POSITION_LABELS = "abcdefgh"
SHEET_MASS_G = 6.0
MAX_PAYLOAD_G = 18.0
DEFAULT_DT = 1e-4
DEFAULT_SAMPLE_RATE = 25.0
DEFAULT_AMPLITUDE_LEVELS = {1: 2.0, 2: 4.0, 4: 8.0}
PERTURBATION_MM = 0.01
FORCE_BOUND_N = 1e3


@dataclass(frozen=True)
class PayloadSpec:
    mass: float  # g
    position: str = "a"

    def __post_init__(self):
        if self.position not in POSITION_LABELS or len(self.position) != 1:
            raise InvalidPosition(f"unknown payload position {self.position!r}; expected one of a-h")
        if self.mass < 0:
            raise ValueError("payload mass must be non-negative")


@dataclass(frozen=True)
class ExcitationSpec:
    """Piecewise sinusoidal base motion; each segment restarts at zero phase.

    Segment tuples are ``(amplitude_mm, frequency_hz, duration_s)``.
    """

    segments: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        segs = tuple((float(a), float(f), float(d)) for a, f, d in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("excitation needs at least one segment")
        for a, f, d in segs:
            if d <= 0:
                raise ValueError("segment durations must be positive")
            if f <= 0 and a != 0:
                raise ValueError("segment frequency must be positive")

    @classmethod
    def sine(cls, amplitude: float, frequency: float, duration: float) -> "ExcitationSpec":
        return cls(((amplitude, frequency, duration),))

    @classmethod
    def from_levels(cls, segments, levels: dict | None = None) -> "ExcitationSpec":
        """Build from ``(level, frequency, duration)`` using the level-to-mm map."""
        levels = DEFAULT_AMPLITUDE_LEVELS if levels is None else levels
        return cls(tuple((amplitude_for_level(lv, levels), f, d) for lv, f, d in segments))

    @property
    def duration(self) -> float:
        return float(sum(d for _, _, d in self.segments))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([d for _, _, d in self.segments])[:-1]])

    def displacement(self, t) -> np.ndarray:
        """Base displacement u(t) in mm (vectorised)."""
        t = np.asarray(t, dtype=float)
        starts = self.starts
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)
        amp = np.array([a for a, _, _ in self.segments])[idx]
        freq = np.array([f for _, f, _ in self.segments])[idx]
        return amp * np.sin(2.0 * np.pi * freq * (t - starts[idx]))

    def to_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments]}


def amplitude_for_level(level, levels: dict | None = None) -> float:
    levels = DEFAULT_AMPLITUDE_LEVELS if levels is None else levels
    key = int(level) if float(level).is_integer() else level
    if key in levels:
        return float(levels[key])
    if str(key) in levels:
        return float(levels[str(key)])
    raise ValueError(f"no amplitude defined for level {level!r}")


def base_excitation(t, amplitude: float, frequency: float):
    """u(t) = A sin(2 pi f t)."""
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    return amplitude * np.sin(2.0 * np.pi * frequency * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ReservoirModel:
    """Folded mesh plus material parameters.

    Stiffness units follow the usual bench conventions: bars in N/m, hinges
    in N*mm/rad. Damping is Rayleigh-type, alpha on nodal mass and beta on the
    axial bar stiffness.
    """

    mesh: FoldedMesh
    node_mass: float = SHEET_MASS_G / 28.0 * 1e-3  # kg
    bar_stiffness: float = 2000.0
    crease_hinge_stiffness: float = 70.65  # calibrated: 10 g at "a" -> 3.0 Hz fundamental
    facet_hinge_stiffness: float = 14.13
    clamp_hinge_stiffness: float = 2000.0
    rayleigh_alpha: float = 12.0
    rayleigh_beta: float = 1e-5
    gravity: float = 9.81
    clamped: frozenset = frozenset({0, 1})
    payload: PayloadSpec | None = None

    def __post_init__(self):
        if min(self.bar_stiffness, self.crease_hinge_stiffness, self.facet_hinge_stiffness) <= 0:
            raise ValueError("stiffnesses must be positive")
        if self.rayleigh_alpha < 0 or self.rayleigh_beta < 0:
            raise ValueError("damping coefficients must be non-negative")

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @cached_property
    def masses(self) -> np.ndarray:
        """Nodal masses in kg including any payload."""
        m = np.full(self.n_nodes, self.node_mass)
        if self.payload is not None and self.payload.mass > 0:
            for node, share in payload_distribution(self.mesh, self.payload.position).items():
                m[node] += share * self.payload.mass * 1e-3
        return m

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @cached_property
    def rest_positions(self) -> np.ndarray:
        return self.mesh.node_positions * 1e-3

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.array([i for i in range(self.n_nodes) if i not in self.clamped], dtype=np.int64)

    @cached_property
    def _arrays(self) -> dict:
        mesh = self.mesh
        rest = self.rest_positions
        # anchor point rigidly attached to the base: mirror of the wing of the
        # clamped edge, so the glued corner cannot rotate about its two nodes
        c0, c1 = sorted(self.clamped)[:2]
        hinges = [tuple(h) for h in mesh.hinges]
        k_h = [
            (self.facet_hinge_stiffness if f else self.crease_hinge_stiffness) * 1e-3
            for f in mesh.hinge_is_facet
        ]
        anchor_rows, anchor_rest, anchor_ref = [], [], []
        wing = _clamp_wing(mesh, c0, c1)
        if wing is not None and self.clamp_hinge_stiffness > 0:
            row = self.n_nodes
            anchor = rest[c0] + rest[c1] - rest[wing]
            anchor_rows.append(row)
            anchor_rest.append(anchor)
            anchor_ref.append(c0)
            hinges.append((c0, c1, wing, row))
            k_h.append(self.clamp_hinge_stiffness * 1e-3)
        ext = np.vstack([rest, np.array(anchor_rest).reshape(-1, 3)])
        hinges_arr = np.array(hinges, dtype=np.int64).reshape(-1, 4)
        theta0 = np.array([_kernels.dihedral(ext, *h) for h in hinges_arr])
        bars = mesh.bars.astype(np.int64)
        bar_len0 = np.linalg.norm(rest[bars[:, 1]] - rest[bars[:, 0]], axis=1)
        bar_k = np.full(len(bars), float(self.bar_stiffness))
        return {
            "bars": bars,
            "bar_len0": bar_len0,
            "bar_k": bar_k,
            "bar_c": self.rayleigh_beta * bar_k,
            "hinges": hinges_arr,
            "theta0": theta0,
            "hinge_k": np.array(k_h, dtype=float),
            "anchor_rows": np.array(anchor_rows, dtype=np.int64),
            "anchor_rest": np.array(anchor_rest, dtype=float).reshape(-1, 3),
            "anchor_ref": np.array(anchor_ref, dtype=np.int64),
            "clamped": np.array(sorted(self.clamped), dtype=np.int64),
            "gravity": np.array([0.0, -self.gravity, 0.0]),
        }

    def with_params(self, **changes) -> "ReservoirModel":
        return replace(self, **changes)

    def describe(self) -> dict:
        return {
            "rows": self.mesh.rows,
            "cols": self.mesh.cols,
            "panel_a": self.mesh.pattern.panel_a,
            "panel_b": self.mesh.pattern.panel_b,
            "gamma": self.mesh.pattern.gamma,
            "fold_angle": self.mesh.fold_angle,
            "node_mass": self.node_mass,
            "bar_stiffness": self.bar_stiffness,
            "crease_hinge_stiffness": self.crease_hinge_stiffness,
            "facet_hinge_stiffness": self.facet_hinge_stiffness,
            "clamp_hinge_stiffness": self.clamp_hinge_stiffness,
            "rayleigh_alpha": self.rayleigh_alpha,
            "rayleigh_beta": self.rayleigh_beta,
            "gravity": self.gravity,
            "clamped": sorted(int(i) for i in self.clamped),
            "payload": None if self.payload is None else [self.payload.mass, self.payload.position],
        }

    def model_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _clamp_wing(mesh: FoldedMesh, c0: int, c1: int) -> int | None:
    for tri in mesh.triangles:
        if c0 in tri and c1 in tri:
            return int(next(n for n in tri if n not in (c0, c1)))
    return None


def default_model(
    rows: int = 4,
    cols: int = 7,
    panel_a: float = 20.0,
    panel_b: float = 20.0,
    gamma: float = 60.0,
    fold_angle: float = 50.0,
    sheet_mass_g: float = SHEET_MASS_G,
    **params,
) -> ReservoirModel:
    mesh = fold_miura(build_miura_pattern(rows, cols, panel_a, panel_b, gamma), fold_angle)
    node_mass = sheet_mass_g * 1e-3 / mesh.n_nodes
    return ReservoirModel(mesh=mesh, node_mass=node_mass, clamped=clamped_nodes(mesh), **params)


def station_coordinate(mesh: FoldedMesh, label: str) -> float:
    """Fractional column index of a payload station along the top edge."""
    if label not in POSITION_LABELS or len(label) != 1:
        raise InvalidPosition(f"unknown payload position {label!r}; expected one of a-h")
    k = POSITION_LABELS.index(label)
    return k * (mesh.cols - 1) / (len(POSITION_LABELS) - 1)


def payload_distribution(mesh: FoldedMesh, label: str) -> dict[int, float]:
    """Share of a payload carried by each top-edge node for a station label."""
    s = station_coordinate(mesh, label)
    top = top_edge_nodes(mesh)
    lo = int(np.floor(s + 1e-12))
    frac = s - lo
    if frac < 1e-12 or lo == len(top) - 1:
        return {top[min(lo, len(top) - 1)]: 1.0}
    return {top[lo]: 1.0 - frac, top[lo + 1]: frac}


def attach_payload(model: ReservoirModel, spec: PayloadSpec) -> ReservoirModel:
    if spec.position not in POSITION_LABELS:
        raise InvalidPosition(f"unknown payload position {spec.position!r}")
    if spec.mass > MAX_PAYLOAD_G:
        warnings.warn(
            f"payload of {spec.mass} g exceeds {MAX_PAYLOAD_G} g; the sheet may buckle",
            ExcessiveLoadWarning,
            stacklevel=2,
        )
    if spec.mass == 0:
        return replace(model, payload=None)
    return replace(model, payload=spec)


# -- forces and energy -------------------------------------------------------


def _extended(model: ReservoirModel, positions: np.ndarray) -> np.ndarray:
    arr = model._arrays
    n_anchor = len(arr["anchor_rows"])
    x = np.empty((model.n_nodes + n_anchor, 3))
    x[: model.n_nodes] = positions
    rest = model.rest_positions
    for a in range(n_anchor):
        ref = arr["anchor_ref"][a]
        x[arr["anchor_rows"][a]] = arr["anchor_rest"][a] + positions[ref] - rest[ref]
    return x


def internal_forces(model: ReservoirModel, positions, velocities, *, gravity: bool = True,
                    force_bound: float = FORCE_BOUND_N) -> np.ndarray:
    """Nodal forces (N) at positions (m) and velocities (m/s), shape (n, 3)."""
    positions = np.asarray(positions, dtype=float).reshape(model.n_nodes, 3)
    velocities = np.asarray(velocities, dtype=float).reshape(model.n_nodes, 3)
    arr = model._arrays
    x = _extended(model, positions)
    v = np.zeros_like(x)
    v[: model.n_nodes] = velocities
    force = np.zeros_like(x)
    g = arr["gravity"] if gravity else np.zeros(3)
    _kernels.accumulate_forces(
        x, v, arr["bars"], arr["bar_len0"], arr["bar_k"], arr["bar_c"], arr["hinges"],
        arr["theta0"], arr["hinge_k"], model.masses, float(model.rayleigh_alpha), g, force,
    )
    out = force[: model.n_nodes]
    if not np.all(np.isfinite(out)) or np.abs(out).max(initial=0.0) > force_bound:
        raise NumericalBlowup("force magnitude exceeds bound")
    return out


def elastic_energy(model: ReservoirModel, positions) -> float:
    arr = model._arrays
    x = _extended(model, np.asarray(positions, dtype=float))
    return float(_kernels.elastic_energy(
        x, arr["bars"], arr["bar_len0"], arr["bar_k"], arr["hinges"], arr["theta0"], arr["hinge_k"]
    ))


def total_energy(model: ReservoirModel, positions, velocities, *, gravity: bool = True) -> float:
    """Kinetic + elastic + gravitational energy (J); gravity datum at y = 0."""
    positions = np.asarray(positions, dtype=float)
    m = model.masses
    kinetic = 0.5 * float(np.sum(m[:, None] * np.asarray(velocities) ** 2))
    potential = float(np.sum(m * positions[:, VERTICAL_AXIS])) * model.gravity if gravity else 0.0
    return kinetic + elastic_energy(model, positions) + potential


# -- time integration ----------------------------------------------------------


@dataclass
class State:
    positions: np.ndarray  # m
    velocities: np.ndarray  # m/s

    def copy(self) -> "State":
        return State(self.positions.copy(), self.velocities.copy())


def rest_state(model: ReservoirModel) -> State:
    return State(model.rest_positions.copy(), np.zeros((model.n_nodes, 3)))


def _drive_arrays(excitation: ExcitationSpec | None):
    if excitation is None:
        return np.zeros(1), np.zeros(1), np.ones(1), np.zeros(1)
    starts = excitation.starts
    amps = np.array([a for a, _, _ in excitation.segments]) * 1e-3
    freqs = np.array([f if f > 0 else 1.0 for _, f, _ in excitation.segments])
    return starts, amps, freqs, starts.copy()


def _run(model, state, t0, dt, n_steps, excitation, *, gravity=True, alpha=None,
         record_every=0, n_records=0):
    arr = model._arrays
    x = _extended(model, state.positions)
    v = np.zeros_like(x)
    v[: model.n_nodes] = state.velocities
    starts, amps, freqs, phase0 = _drive_arrays(excitation)
    out_x = np.zeros((max(n_records, 1), model.n_nodes, 3))
    out_v = np.zeros_like(out_x)
    g = arr["gravity"] * (gravity if not isinstance(gravity, bool) else float(gravity))
    fail = _kernels.integrate(
        x, v, model.rest_positions, model.free_nodes, arr["clamped"], arr["anchor_rows"],
        arr["anchor_rest"], arr["anchor_ref"], arr["bars"], arr["bar_len0"], arr["bar_k"],
        arr["bar_c"], arr["hinges"], arr["theta0"], arr["hinge_k"], model.masses,
        float(model.rayleigh_alpha if alpha is None else alpha), g, VERTICAL_AXIS,
        starts, amps, freqs, phase0, float(t0), float(dt), int(n_steps), int(record_every),
        FORCE_BOUND_N, out_x, out_v,
    )
    if fail >= 0:
        t_fail = t0 + fail * dt
        raise NumericalBlowup(f"integration diverged at t = {t_fail:.4f} s", time=t_fail)
    return State(x[: model.n_nodes].copy(), v[: model.n_nodes].copy()), out_x, out_v


def step(model: ReservoirModel, state: State, t: float, dt: float = DEFAULT_DT,
         excitation: ExcitationSpec | None = None, *, gravity: bool = True) -> State:
    """One semi-implicit Euler step: velocities first, then positions.

    Clamped nodes are placed at the base displacement for time ``t + dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    new, _, _ = _run(model, state, t, dt, 1, excitation, gravity=gravity)
    return new


def advance(model: ReservoirModel, state: State, duration: float, *, t0: float = 0.0,
            dt: float = DEFAULT_DT, excitation: ExcitationSpec | None = None, gravity: bool = True) -> State:
    """Integrate ``duration`` seconds from ``state`` and return the final state."""
    n_steps = int(round(duration / dt))
    if n_steps < 0:
        raise ValueError("duration must be non-negative")
    new, _, _ = _run(model, state, t0, dt, n_steps, excitation, gravity=gravity)
    return new


def settle(model: ReservoirModel, state: State | None = None, *, duration: float = 2.0,
           ramp: float = 1.0, alpha: float = 60.0, dt: float = DEFAULT_DT) -> State:
    """Quasi-static loading under gravity with heavy mass damping, base at rest."""
    state = rest_state(model) if state is None else state
    n_ramp = 20
    ramp_steps = int(round(ramp / dt / n_ramp))
    for i in range(1, n_ramp + 1):
        state, _, _ = _run(model, state, 0.0, dt, ramp_steps, None, gravity=i / n_ramp, alpha=alpha)
    hold = int(round((duration - ramp) / dt))
    if hold > 0:
        state, _, _ = _run(model, state, 0.0, dt, hold, None, alpha=alpha)
    state.velocities[:] = 0.0
    return state


@dataclass(frozen=True)
class Trajectory:
    sample_rate: float
    times: np.ndarray
    states: np.ndarray  # (samples, nodes) vertical displacement in mm
    node_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states must be (samples, nodes) aligned with times")
        if self.states.shape[1] != len(self.node_names):
            raise ValueError("one node name per state column")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains NaN or Inf")

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.states.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def trajectory_id(self) -> str:
        return str(self.metadata.get("id", "")) or content_hash(self)


def content_hash(traj: Trajectory) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(traj.times).tobytes())
    h.update(np.ascontiguousarray(traj.states).tobytes())
    return h.hexdigest()[:16]


def simulate(
    model: ReservoirModel,
    excitation: ExcitationSpec,
    duration: float | None = None,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    seed: int | None = 0,
    *,
    dt: float = DEFAULT_DT,
    settle_time: float = 2.0,
    perturbation: float = PERTURBATION_MM,
    gravity: bool = True,
) -> Trajectory:
    """Run the excitation and sample vertical displacements at ``sample_rate``.

    The sheet first settles under gravity with the base at rest; displacements
    are reported against the unloaded folded geometry, so static sag under
    the payload shows up in every channel.
    """
    duration = excitation.duration if duration is None else float(duration)
    ratio = 1.0 / (sample_rate * dt)
    every = int(round(ratio))
    if every < 1 or abs(ratio - every) > 1e-6:
        raise ValueError("1 / (sample_rate * dt) must be a positive integer")
    n_samples = int(round(duration * sample_rate))
    if n_samples < 1:
        raise InsufficientSamples("duration shorter than one sample interval")

    state = rest_state(model)
    if seed is not None and perturbation > 0:
        rng = np.random.default_rng(seed)
        kick = rng.uniform(-perturbation, perturbation, size=(len(model.free_nodes), 3)) * 1e-3
        state.positions[model.free_nodes] += kick
    if gravity and settle_time > 0:
        state = settle(model, state, duration=settle_time, ramp=min(1.0, settle_time / 2), dt=dt)

    final, out_x, _ = _run(
        model, state, 0.0, dt, (n_samples - 1) * every, excitation, gravity=gravity,
        record_every=every, n_records=n_samples - 1,
    )
    y = np.empty((n_samples, model.n_nodes))
    y[0] = state.positions[:, VERTICAL_AXIS]
    if n_samples > 1:
        y[1:] = out_x[:, :, VERTICAL_AXIS]
    rest_y = model.rest_positions[:, VERTICAL_AXIS]
    disp = (y - rest_y) * 1e3
    times = np.arange(n_samples) * every * dt
    meta = {
        "model_hash": model.model_hash(),
        "payload": None if model.payload is None else {"mass": model.payload.mass, "position": model.payload.position},
        "excitation": excitation.to_dict(),
        "seed": seed,
        "sample_rate": sample_rate,
        "dt": dt,
        "settle_time": settle_time,
        "gravity": bool(gravity),
    }
    names = tuple(model.mesh.node_name(i) for i in range(model.n_nodes))
    return Trajectory(float(sample_rate), times, disp, names, meta)


# -- linear analysis -----------------------------------------------------------


def stiffness_matrix(model: ReservoirModel, positions: np.ndarray, h: float = 1e-7) -> np.ndarray:
    """Tangent stiffness over free DOFs by central differences of the forces."""
    free = model.free_nodes
    dofs = [(i, d) for i in free for d in range(3)]
    K = np.empty((len(dofs), len(dofs)))
    zero_v = np.zeros((model.n_nodes, 3))
    for col, (i, d) in enumerate(dofs):
        xp = positions.copy()
        xm = positions.copy()
        xp[i, d] += h
        xm[i, d] -= h
        fp = internal_forces(model, xp, zero_v)[free].ravel()
        fm = internal_forces(model, xm, zero_v)[free].ravel()
        K[:, col] = -(fp - fm) / (2 * h)
    return 0.5 * (K + K.T)


def natural_frequencies(model: ReservoirModel, state: State | None = None, count: int = 5) -> np.ndarray:
    """Lowest undamped natural frequencies (Hz) about the loaded equilibrium."""
    state = settle(model) if state is None else state
    K = stiffness_matrix(model, state.positions)
    m = np.repeat(model.masses[model.free_nodes], 3)
    minv = 1.0 / np.sqrt(m)
    A = K * minv[:, None] * minv[None, :]
    w2 = np.linalg.eigvalsh(A)
    return np.sqrt(np.clip(w2[:count], 0.0, None)) / (2 * np.pi)


def calibrate_crease_stiffness(
    model: ReservoirModel,
    target_hz: float = 3.0,
    payload: PayloadSpec = PayloadSpec(10.0, "a"),
    facet_ratio: float = 0.2,
    lo: float = 0.05,
    hi: float = 1000.0,
    tol: float = 0.01,
    max_iter: int = 40,
) -> tuple[ReservoirModel, float]:
    """Bisect the crease stiffness until the loaded fundamental hits ``target_hz``.

    Returns the calibrated (unloaded) model and the achieved frequency.
    """

    def fundamental(k):
        trial = replace(model, crease_hinge_stiffness=k, facet_hinge_stiffness=facet_ratio * k, payload=payload)
        return natural_frequencies(trial, count=1)[0]

    f_lo, f_hi = fundamental(lo), fundamental(hi)
    if not (f_lo <= target_hz <= f_hi):
        raise ValueError(f"target {target_hz} Hz outside bracket [{f_lo:.3f}, {f_hi:.3f}] Hz")
    f_mid = f_lo
    for _ in range(max_iter):
        mid = np.sqrt(lo * hi)
        f_mid = fundamental(mid)
        if abs(f_mid - target_hz) <= tol * target_hz:
            break
        if f_mid < target_hz:
            lo = mid
        else:
            hi = mid
    calibrated = replace(model, crease_hinge_stiffness=mid, facet_hinge_stiffness=facet_ratio * mid, payload=None)
    return calibrated, float(f_mid)


# -- response analysis -----------------------------------------------------------


def _tone_power(x: np.ndarray, freq: float, rate: float) -> float:
    n = len(x)
    t = np.arange(n) / rate
    window = np.hanning(n)
    xw = (x - x.mean()) * window
    c = np.sum(xw * np.exp(-2j * np.pi * freq * t))
    return float(np.abs(c) ** 2)


def tone_amplitude(x: np.ndarray, freq: float, rate: float) -> float:
    """Amplitude of the ``freq`` component of ``x`` (Hann-windowed DFT)."""
    n = len(x)
    return 2.0 * np.sqrt(_tone_power(x, freq, rate)) / np.sum(np.hanning(n))


def harmonic_distortion(x: np.ndarray, freq: float, rate: float, harmonics=(2, 3)) -> float:
    """Power at the listed harmonics over power at the fundamental.

    Harmonics at or above Nyquist are skipped.
    """
    base = _tone_power(x, freq, rate)
    if base <= 0:
        return 0.0
    extra = sum(_tone_power(x, h * freq, rate) for h in harmonics if h * freq < rate / 2)
    return extra / base


def nonlinearity_index(traj: Trajectory, frequency: float, head: float = 5.0, tail: float = 5.0) -> float:
    """Largest harmonic distortion over node channels in the washed window."""
    rate = traj.sample_rate
    if rate / frequency < 4:
        raise InsufficientSamples(f"{rate / frequency:.2f} samples per period; need at least 4")
    lo = int(round(head * rate))
    hi = traj.n_samples - int(round(tail * rate))
    if hi - lo < 4:
        lo, hi = 0, traj.n_samples
    window = traj.states[lo:hi]
    return max(harmonic_distortion(window[:, j], frequency, rate) for j in range(window.shape[1]))
