import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from miura_reservoir.conditions import Simulator
from miura_reservoir.dynamics import POSITION_LABELS, Trajectory, default_model
from miura_reservoir.errors import DimensionMismatch, InsufficientSamples
from miura_reservoir.geometry import bottom_row_nodes
from miura_reservoir.reservoir import StateMatrix, TargetSignal, train_readout
from miura_reservoir.tasks import (
    BOTTOM_BASELINE_CHANNELS,
    LEFT,
    RIGHT,
    PatternTaskSpec,
    PositionTaskSpec,
    RunProtocol,
    TaskResult,
    WeightFrequencySpec,
    WeightPositionSpec,
    WeightTaskSpec,
    block_average,
    classify_position,
    dimensionality_sweep,
    estimate_weight,
    load_task_result,
    position_target,
    random_pattern_sequence,
    recognize_pattern,
    run_position_task,
    run_weight_frequency_multitask,
    run_weight_position_multitask,
    run_weight_task,
    score_windows,
    segment_step,
    spearman,
    station_side,
    train_multitask,
    weight_target,
)


class LinearProvider:
    """Synthetic reservoir whose static offset is linear in payload mass and station."""

    def __init__(self, rate=25.0):
        self.rate = rate
        self.calls = 0

    def prefetch(self, conditions):
        pass

    def get(self, cond):
        self.calls += 1
        n = int(round(cond.duration * self.rate))
        t = np.arange(n) / self.rate
        j = np.arange(28)
        k = POSITION_LABELS.index(cond.position) - 3.5
        drive = cond.excitation.displacement(t)
        wobble = np.sin(2 * np.pi * 0.37 * t)
        states = (0.1 * (j + 1) * cond.mass + 0.05 * (j - 13.5) * k
                  + np.outer(drive, np.sin(j)) + np.outer(wobble, np.cos(j)))
        names = tuple(f"node_{i}" for i in j)
        return Trajectory(self.rate, t, states, names, {"id": f"{cond.mass:g}{cond.position}"})


@pytest.fixture
def linear():
    return LinearProvider()


def test_weight_target_shape():
    Y = weight_target(3.0, 16.0)
    assert Y.values.shape == (250, 1)
    assert set(Y.values[:125, 0]) == {3.0} and set(Y.values[125:, 0]) == {16.0}
    with pytest.raises(ValueError):
        weight_target(5.0, 5.0)


def test_estimate_weight_is_mean_output():
    S = StateMatrix(np.ones((10, 2)), (0, 1))
    W = train_readout(StateMatrix(np.eye(3)[:, :2], (0, 1)), TargetSignal([1.0, 2.0, 0.0], ("w",)))
    assert estimate_weight(S, W) == pytest.approx(W.bias[0] + W.weights.sum())


def test_weight_task_exact_on_linear_reservoir(linear):
    res = run_weight_task(WeightTaskSpec(), linear)
    for q in res.predictions:
        assert q["prediction"] == pytest.approx(q["mass"], abs=1e-6)
    assert res.metrics["successes"] == 12 and res.metrics["separable"]


def test_position_target_and_sides():
    Y = position_target()
    assert Y.values[0, 0] == -1.0 and Y.values[-1, 0] == 1.0
    assert [station_side(x) for x in "abcdefgh"] == [LEFT] * 4 + [RIGHT] * 4


def test_zero_output_classifies_right():
    S = StateMatrix(np.zeros((5, 1)), (0,))
    W = train_readout(StateMatrix(np.array([[1.0], [2.0]]), (0,)), TargetSignal([0.0, 0.0], ("p",)))
    side, mean = classify_position(S, W)
    assert mean == 0.0 and side == RIGHT


def test_position_task_on_linear_reservoir(linear):
    res = run_position_task(PositionTaskSpec(), linear)
    assert res.metrics["accuracy"] == 1.0
    means = {q["position"]: q["mean_output"] for q in res.predictions}
    assert means["a"] == pytest.approx(-1.0, abs=1e-6) and means["h"] == pytest.approx(1.0, abs=1e-6)


def test_segment_step():
    assert segment_step(4.0, 25.0) == pytest.approx(1.0)
    assert segment_step(2.0, 25.0) == pytest.approx(1.0)
    assert segment_step(1.5, 25.0) == pytest.approx(2.0)
    assert segment_step(5.0, 25.0) == pytest.approx(0.2)


@given(st.integers(0, 10_000), st.integers(2, 30))
@settings(max_examples=40, deadline=None)
def test_random_sequences_alternate_and_snap(seed, n):
    freqs = {4.0: 4.0, 2.0: 2.0, 6.0: 6.0}
    seq = random_pattern_sequence(freqs, n, (1.0, 4.0), seed, 25.0, freqs)
    assert len(seq) == n
    assert all(a[0] != b[0] for a, b in zip(seq, seq[1:]))
    for v, d in seq:
        cycles = d * v
        assert abs(cycles - round(cycles)) < 1e-9
        assert abs(d * 25 - round(d * 25)) < 1e-9
    assert seq == random_pattern_sequence(freqs, n, (1.0, 4.0), seed, 25.0, freqs)


def test_block_average_and_single_frame_window():
    y = np.arange(10.0)
    np.testing.assert_array_equal(block_average(y, 5), [2.0, 7.0])
    with pytest.raises(InsufficientSamples):
        block_average(y, 11)
    S = StateMatrix(np.linspace(0, 1, 25)[:, None], (0,))
    W = train_readout(S, TargetSignal(np.linspace(2, 6, 25), ("f",)))
    rec = recognize_pattern(S, W, window=1 / 25, trained_values=(2.0, 4.0, 6.0))
    np.testing.assert_allclose(rec["estimate"], rec["output"])
    with pytest.raises(ValueError):
        recognize_pattern(S, W, window=0.1)


def test_score_windows_skips_boundaries():
    truth = np.repeat([2.0, 4.0, 6.0], [10, 7, 8])
    cls = np.array([2.0, 2.0, 4.0, 6.0, 6.0])
    s = score_windows(cls, truth, 5)
    assert s["boundary"].tolist() == [False, False, False, True, False]
    assert s["accuracy"] == 1.0 and s["windows"] == 4 and s["boundary_windows"] == 1
    assert s["majority"].tolist() == [2.0, 2.0, 4.0, 6.0, 6.0]
    wrong = score_windows(np.array([2.0, 4.0, 4.0, 2.0, 6.0]), truth, 5)
    assert wrong["accuracy"] == 0.75


def test_pattern_spec_conditions():
    spec = PatternTaskSpec()
    train = spec.train_condition()
    assert [f for _, f, _ in train.segments] == [4.0, 2.0, 6.0]
    assert train.duration == pytest.approx(20.0)
    assert spec.test_condition().duration == pytest.approx(5.0 + sum(d for _, d in spec.test_values()))
    amp = PatternTaskSpec.amplitude_mode()
    assert amp.drive(4) == (8.0, 4.0)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30),
       st.lists(st.floats(-100, 100), min_size=3, max_size=30))
def test_spearman_matches_scipy(x, y):
    n = min(len(x), len(y))
    x, y = x[:n], y[:n]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-9)


def test_multitask_row_counts_and_equivalence(linear):
    wp = run_weight_position_multitask(WeightPositionSpec(), linear)
    wf = run_weight_frequency_multitask(WeightFrequencySpec(), linear)
    assert wp.metrics["train_rows"] == 500
    assert wf.metrics["train_rows"] == 750
    for r in (wp, wf):
        assert r.metrics["joint_vs_independent_relative_diff"] < 1e-10
    assert all(q["weight_relative_error"] < 1e-6 for q in wp.predictions)
    with pytest.raises(DimensionMismatch):
        train_multitask(StateMatrix(np.eye(3), (0, 1, 2)), TargetSignal(np.ones(3), ("y",)))


def test_sweep_full_count_has_no_spread_and_is_deterministic(linear):
    a = dimensionality_sweep(WeightTaskSpec(), linear, counts=(4, 28), trials=3, seed=2)
    b = dimensionality_sweep(WeightTaskSpec(), linear, counts=(4, 28), trials=3, seed=2)
    curve = a.tables["rmse_vs_count"]["curve"]
    assert curve[-1]["trials"] == 1 and curve[-1]["std_rmse"] == 0.0
    assert curve[0]["trials"] == 3
    assert a.predictions == b.predictions


def test_baseline_channels_are_bottom_row_near_clamp(model):
    assert tuple(bottom_row_nodes(model.mesh)[:4]) == BOTTOM_BASELINE_CHANNELS
    assert set(model.clamped) <= set(BOTTOM_BASELINE_CHANNELS)


def test_result_round_trip(tmp_path, linear):
    res = run_weight_task(WeightTaskSpec(), linear)
    path = res.write(tmp_path, "w")
    back = load_task_result(path)
    assert back.metrics == res.metrics
    assert back.predictions == res.predictions
    np.testing.assert_array_equal(back.series["test"]["y"].ravel(), np.asarray(res.series["test"]["y"]).ravel())


def test_weight_training_windows_reproduce_targets(sim):
    res = run_weight_task(WeightTaskSpec(), sim)
    assert res.metrics["train_max_relative_error"] < 0.05


def test_mirror_symmetric_sheet_gives_antisymmetric_position_output():
    """Clamping the whole bottom row makes the sheet left/right symmetric."""
    m = default_model().with_params(clamped=frozenset(range(7)), clamp_hinge_stiffness=0.0)
    provider = Simulator(m)
    proto = RunProtocol(seed=0)
    spec = PositionTaskSpec(12.0, 3.0, test_positions=("d", "e"), protocol=proto)
    res = run_position_task(spec, provider)
    means = {q["position"]: q["mean_output"] for q in res.predictions}
    assert means["a"] < 0 < means["h"]
    assert means["d"] == pytest.approx(-means["e"], rel=0.2)
