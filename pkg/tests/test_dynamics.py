import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from miura_reservoir import _kernels
from miura_reservoir.dynamics import (
    DEFAULT_DT,
    ExcitationSpec,
    PayloadSpec,
    _run,
    advance,
    attach_payload,
    calibrate_crease_stiffness,
    default_model,
    harmonic_distortion,
    internal_forces,
    elastic_energy,
    natural_frequencies,
    nonlinearity_index,
    payload_distribution,
    rest_state,
    simulate,
    station_coordinate,
    stiffness_matrix,
    tone_amplitude,
    total_energy,
    Trajectory,
)
from miura_reservoir.errors import ExcessiveLoadWarning, InsufficientSamples, InvalidPosition, NumericalBlowup


def test_one_dof_oscillator_matches_analytic_solution():
    # two nodes joined by a unit bar; node 0 held, node 1 released 0.1 m stretched
    x = np.array([[0.0, 0.0, 0.0], [1.1, 0.0, 0.0]])
    v = np.zeros_like(x)
    rest = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    period = 2 * np.pi
    dt = period / 1000
    n = 1000
    out_x = np.zeros((n, 2, 3))
    out_v = np.zeros_like(out_x)
    none_i = np.zeros(0, dtype=np.int64)
    fail = _kernels.integrate(
        x, v, rest, np.array([1], dtype=np.int64), np.array([0], dtype=np.int64),
        none_i, np.zeros((0, 3)), none_i,
        np.array([[0, 1]], dtype=np.int64), np.array([1.0]), np.array([1.0]), np.array([0.0]),
        np.zeros((0, 4), dtype=np.int64), np.zeros(0), np.zeros(0),
        np.ones(2), 0.0, np.zeros(3), 1,
        np.zeros(1), np.zeros(1), np.ones(1), np.zeros(1),
        0.0, dt, n, 1, 1e9, out_x, out_v,
    )
    assert fail == -1
    t = dt * np.arange(1, n + 1)
    exact = 1.0 + 0.1 * np.cos(t)
    err = np.abs(out_x[:, 1, 0] - exact).max() / 0.1
    assert err < 0.01
    assert np.abs(out_x[:, 1, 1:]).max() == 0.0


def _points(draw_vals):
    return np.array(draw_vals, dtype=float).reshape(4, 3)


hinge_points = st.lists(st.floats(-1.0, 1.0), min_size=12, max_size=12).map(_points).filter(
    lambda x: (np.linalg.norm(np.cross(x[1] - x[0], x[2] - x[0])) > 0.1
               and np.linalg.norm(np.cross(x[3] - x[0], x[1] - x[0])) > 0.1)
)


@given(hinge_points)
@settings(max_examples=80, deadline=None)
def test_dihedral_gradient_matches_finite_differences(x):
    grad = np.zeros((4, 3))
    _kernels.dihedral_gradient(x, 0, 1, 2, 3, grad)
    h = 1e-6
    fd = np.zeros((4, 3))
    base = _kernels.dihedral(x, 0, 1, 2, 3)
    for i in range(4):
        for d in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, d] += h
            xm[i, d] -= h
            tp = _kernels.dihedral(xp, 0, 1, 2, 3)
            tm = _kernels.dihedral(xm, 0, 1, 2, 3)
            # stay on one branch of the angle
            tp += 2 * np.pi * np.round((base - tp) / (2 * np.pi))
            tm += 2 * np.pi * np.round((base - tm) / (2 * np.pi))
            fd[i, d] = (tp - tm) / (2 * h)
    assert np.abs(grad - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max()) + 1e-7
    # rigid translation leaves the angle unchanged
    np.testing.assert_allclose(grad.sum(axis=0), 0.0, atol=1e-9 * max(1.0, np.abs(grad).max()))


def test_nodal_forces_are_negative_energy_gradient(model):
    rng = np.random.default_rng(3)
    m = model.with_params(rayleigh_alpha=0.0, rayleigh_beta=0.0)
    x = m.rest_positions.copy()
    x[m.free_nodes] += rng.uniform(-0.5e-3, 0.5e-3, size=(len(m.free_nodes), 3))
    f = internal_forces(m, x, np.zeros_like(x), gravity=False)
    h = 1e-9
    grad = np.zeros_like(x)
    for i in m.free_nodes:
        for d in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, d] += h
            xm[i, d] -= h
            grad[i, d] = (elastic_energy(m, xp) - elastic_energy(m, xm)) / (2 * h)
    free = m.free_nodes
    rel = np.linalg.norm(f[free] + grad[free]) / np.linalg.norm(f[free])
    assert rel < 1e-6


def test_hinge_only_forces_match_energy_gradient(model):
    """Hinges alone, with bars made negligibly stiff."""
    rng = np.random.default_rng(5)
    m = model.with_params(bar_stiffness=1e-9, rayleigh_alpha=0.0, rayleigh_beta=0.0)
    x = m.rest_positions.copy()
    x[m.free_nodes] += rng.uniform(-1e-3, 1e-3, size=(len(m.free_nodes), 3))
    f = internal_forces(m, x, np.zeros_like(x), gravity=False)
    h = 1e-8
    free = m.free_nodes
    grad = np.zeros_like(x)
    for i in free:
        for d in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, d] += h
            xm[i, d] -= h
            grad[i, d] = (elastic_energy(m, xp) - elastic_energy(m, xm)) / (2 * h)
    assert np.linalg.norm(f[free] + grad[free]) / np.linalg.norm(f[free]) < 1e-6


def _energy_drift(dt):
    m = default_model().with_params(rayleigh_alpha=0.0, rayleigh_beta=0.0)
    K = stiffness_matrix(m, m.rest_positions)
    _, modes = eigh(K, np.diag(np.repeat(m.masses[m.free_nodes], 3)))
    mode = modes[:, 0].reshape(-1, 3)
    mode /= np.abs(mode).max()
    s = rest_state(m)
    s.positions[m.free_nodes] += 0.5e-3 * mode
    e0 = total_energy(m, s.positions, s.velocities, gravity=False)
    every = int(round(0.01 / dt))
    n = int(round(10.0 / dt))
    _, ox, ov = _run(m, s, 0.0, dt, n, None, gravity=False, record_every=every, n_records=n // every)
    e = np.array([total_energy(m, ox[i], ov[i], gravity=False) for i in range(len(ox))])
    return np.abs(e - e0).max() / e0


def test_undamped_mesh_conserves_energy():
    coarse = _energy_drift(DEFAULT_DT)
    fine = _energy_drift(DEFAULT_DT / 2)
    assert coarse < 0.01
    # first-order integrator: halving the step at least halves the drift
    assert coarse / fine >= 2.0


def test_zero_drive_gives_zero_output(model):
    traj = simulate(model, ExcitationSpec.sine(0.0, 1.0, 2.0), seed=None, gravity=False)
    assert np.abs(traj.states).max() == 0.0


def test_clamped_nodes_follow_the_base(model):
    ex = ExcitationSpec.sine(4.0, 3.0, 3.0)
    traj = simulate(model, ex)
    u = ex.displacement(traj.times)
    for node in sorted(model.clamped):
        np.testing.assert_allclose(traj.states[:, node], u, atol=1e-9)


def test_sample_count_and_names(model):
    traj = simulate(model, ExcitationSpec.sine(4.0, 3.0, 15.0))
    assert traj.states.shape == (375, 28)
    assert traj.times[1] == pytest.approx(0.04)
    assert traj.node_names[0] == "node_00" and traj.node_names[-1] == "node_36"


def test_simulation_is_deterministic(model):
    m = attach_payload(model, PayloadSpec(9.0, "c"))
    ex = ExcitationSpec.sine(4.0, 2.0, 4.0)
    a = simulate(m, ex, seed=7)
    b = simulate(m, ex, seed=7)
    c = simulate(m, ex, seed=8)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_unforced_sheet_comes_to_rest(model):
    s = advance(model, rest_state(model), 10.0)
    assert np.linalg.norm(s.velocities) < 1e-9
    s2 = advance(model, s, 2.0)
    assert np.abs(s2.positions - s.positions).max() < 1e-12


def test_heavier_payload_sags_further(model):
    ex = ExcitationSpec.sine(0.0, 1.0, 1.0)
    light = simulate(attach_payload(model, PayloadSpec(3.0, "a")), ex, seed=None)
    heavy = simulate(attach_payload(model, PayloadSpec(15.0, "a")), ex, seed=None)
    assert heavy.states[-1, 21] < light.states[-1, 21] < 0


def test_tone_amplitude_and_distortion():
    rate = 25.0
    t = np.arange(250) / rate
    pure = 2.0 * np.sin(2 * np.pi * 1.0 * t)
    assert tone_amplitude(pure, 1.0, rate) == pytest.approx(2.0, rel=1e-3)
    assert harmonic_distortion(pure, 1.0, rate) < 1e-3
    mixed = pure + 0.2 * np.sin(2 * np.pi * 2.0 * t)
    assert harmonic_distortion(mixed, 1.0, rate) == pytest.approx(0.01, rel=0.05)


def test_nonlinearity_index_needs_resolution():
    traj = Trajectory(25.0, np.arange(50) / 25.0, np.zeros((50, 1)), ("node_00",))
    with pytest.raises(InsufficientSamples):
        nonlinearity_index(traj, 10.0)


def test_sampling_is_faithful():
    m = attach_payload(default_model(), PayloadSpec(10.0, "a"))
    ex = ExcitationSpec.sine(4.0, 6.0, 15.0)
    slow = simulate(m, ex, sample_rate=25)
    fast = simulate(m, ex, sample_rate=250)
    for j in (21, 24, 27):
        a = tone_amplitude(slow.states[125:250, j], 6.0, 25)
        b = tone_amplitude(fast.states[1250:2500, j], 6.0, 250)
        assert abs(a - b) / b < 0.05


def test_payload_distribution_preserves_mass_and_centroid(model):
    mesh = model.mesh
    top = list(range(21, 28))
    assert payload_distribution(mesh, "a") == {21: 1.0}
    assert payload_distribution(mesh, "h") == {27: 1.0}
    for label in "abcdefgh":
        share = payload_distribution(mesh, label)
        assert sum(share.values()) == pytest.approx(1.0)
        centroid = sum(w * top.index(n) for n, w in share.items())
        assert centroid == pytest.approx(station_coordinate(mesh, label))
    loaded = attach_payload(model, PayloadSpec(12.0, "d"))
    assert loaded.total_mass == pytest.approx(model.total_mass + 0.012)


def test_payload_validation(model):
    with pytest.raises(InvalidPosition):
        PayloadSpec(5.0, "z")
    with pytest.warns(ExcessiveLoadWarning):
        attach_payload(model, PayloadSpec(25.0, "a"))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        attach_payload(model, PayloadSpec(18.0, "a"))


def test_default_stiffness_is_calibrated(model):
    f = natural_frequencies(attach_payload(model, PayloadSpec(10.0, "a")), count=1)[0]
    assert f == pytest.approx(3.0, rel=0.01)


def test_calibration_hits_target(model):
    calibrated, f = calibrate_crease_stiffness(model, target_hz=4.0)
    assert f == pytest.approx(4.0, rel=0.01)
    assert calibrated.payload is None
    assert calibrated.crease_hinge_stiffness > model.crease_hinge_stiffness


def test_oversized_step_raises_blowup(model):
    with pytest.raises(NumericalBlowup) as info:
        simulate(model, ExcitationSpec.sine(8.0, 6.0, 5.0), dt=4e-3)
    assert info.value.time is not None


def test_bad_sampling_ratio_rejected(model):
    with pytest.raises(ValueError):
        simulate(model, ExcitationSpec.sine(4.0, 3.0, 1.0), sample_rate=30)
