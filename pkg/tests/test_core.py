import math

import numpy as np
import pytest

from eahawkes import (
    BinnedCounts,
    BranchingMatrix,
    Constant,
    DecayPiece,
    DecaySpec,
    EventStream,
    KernelSpec,
    MatrixFunction,
    ModelSpec,
    ScalarDecay,
    compensator,
    epidemic_control_decay,
    eval_decay,
    eval_intensity,
    kernel_integral,
)
from eahawkes.core import FORM_CONST, FORM_MAX_POWER, FORM_SHIFTED_POWER
from eahawkes.errors import ConfigError, DomainError, PreconditionError

from conftest import random_history
from oracles import hawkes_intensity

# 25^2.4 and 20^2.4 to 40 digits (mpmath)
POW_25 = 2264.936448992798535845668752754919033482
POW_20 = 1325.781606935994720187432057725056694612


@pytest.fixture
def d():
    return epidemic_control_decay()


# --- decay -----------------------------------------------------------------


def test_decay_flat_first_week(d):
    assert eval_decay(d, 7.0) == pytest.approx(1 / 49, rel=1e-15)
    assert eval_decay(d, 3.0) == pytest.approx(1 / 49, rel=1e-15)
    assert eval_decay(d, 0.0) == pytest.approx(1 / 49, rel=1e-15)


def test_decay_power_pieces(d):
    assert eval_decay(d, 10.0) == pytest.approx(0.01, rel=1e-15)
    assert eval_decay(d, 20.0) == pytest.approx(1 / 400, rel=1e-15)
    assert eval_decay(d, 25.0) == pytest.approx(1 / (POW_25 - 926.7), rel=1e-12)
    assert eval_decay(d, 25.0) == pytest.approx(0.0007472521023864157, rel=1e-12)


def test_decay_nearly_continuous_at_20(d):
    right = 1 / (POW_20 - 926.7)
    assert abs(1 / 400 - right) < 1e-4
    assert eval_decay(d, 20.0 + 1e-12) == pytest.approx(right, rel=1e-9)


def test_decay_nonincreasing_on_grid(d):
    grid = np.arange(0.0, 60.0 + 1e-9, 0.01)
    assert np.all(np.diff(d(grid)) <= 0)
    assert d.is_nonincreasing()


def test_decay_jump_factor(d):
    # the right limit at 20 sits 0.23% above 1/400
    assert d.jump_factor() == pytest.approx(400 / (POW_20 - 926.7), rel=1e-12)
    assert DecaySpec.constant(2.0).jump_factor() == 1.0


def test_constant_decay_is_identity():
    spec = DecaySpec.constant(1.0)
    for t in (0.0, 1.5, 1e6):
        assert eval_decay(spec, t) == 1.0


def test_decay_negative_time(d):
    with pytest.raises(DomainError):
        eval_decay(d, -0.1)


def test_decay_spec_validation():
    with pytest.raises(ConfigError):
        DecaySpec((DecayPiece(5.0, FORM_CONST, c=1.0),))
    with pytest.raises(ConfigError):
        DecaySpec((DecayPiece(5.0, FORM_CONST), DecayPiece(3.0, FORM_CONST), DecayPiece(math.inf, FORM_CONST)))
    with pytest.raises(ConfigError):
        DecaySpec((DecayPiece(math.inf, FORM_CONST, c=-1.0),))
    with pytest.raises(ConfigError):
        DecayPiece(1.0, "exp")
    with pytest.raises(ConfigError):
        DecayPiece(1.0, FORM_MAX_POWER, p=-1.0)
    # denominator goes negative below q^(1/p)
    with pytest.raises(ConfigError):
        DecaySpec((DecayPiece(math.inf, FORM_SHIFTED_POWER, p=2.0, q=4.0),))


def test_scalar_decay_rejects_increasing():
    rising = DecaySpec((DecayPiece(1.0, FORM_CONST, c=1.0), DecayPiece(math.inf, FORM_CONST, c=2.0)))
    with pytest.raises(ConfigError):
        ScalarDecay(rising)


# --- model types -------------------------------------------------------------


def test_branching_matrix_mask():
    with pytest.raises(ConfigError):
        BranchingMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2, dtype=bool))
    with pytest.raises(ConfigError):
        BranchingMatrix(np.array([[-1.0]]))
    b = BranchingMatrix(np.eye(2))
    assert b.mask.all()


def test_kernel_positive():
    with pytest.raises(ConfigError):
        KernelSpec(np.array([[0.0]]))


def test_model_dimension_mismatch():
    with pytest.raises(ConfigError):
        ModelSpec(np.zeros(2), BranchingMatrix(np.zeros((3, 3))), KernelSpec(np.ones((3, 3))))


def test_model_arrays_read_only():
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    with pytest.raises(ValueError):
        model.mu[0] = 2.0


def test_event_stream_invariants():
    with pytest.raises(PreconditionError):
        EventStream([1.0, 1.0], [0, 0], 1)
    with pytest.raises(PreconditionError):
        EventStream([0.5], [2], 2)
    with pytest.raises(PreconditionError):
        EventStream([0.5, 2.0], [0, 0], 1, horizon=1.0)
    s = EventStream.from_events([(1.0, 0), (1.0, 1), (0.5, 0)], 2)
    assert np.all(np.diff(s.times) > 0)
    assert s.times[2] == pytest.approx(1.0 + 1e-9, abs=1e-15)


def test_binned_counts_invariants():
    with pytest.raises(PreconditionError):
        BinnedCounts(0.0, [[1]])
    with pytest.raises(PreconditionError):
        BinnedCounts(1.0, [[-1]])
    with pytest.raises(PreconditionError):
        BinnedCounts(1.0, [[1]], seed_counts=[[2]])


# --- kernel integral ------------------------------------------------------


def test_kernel_integral():
    assert kernel_integral(0.5, 0.0, math.inf) == 2.0
    assert kernel_integral(1.0, 0.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert kernel_integral(0.5, 1.0, 3.0) == pytest.approx(0.7668009991284072, rel=1e-14)
    with pytest.raises(DomainError):
        kernel_integral(1.0, 2.0, 1.0)


# --- intensity -------------------------------------------------------------


def test_intensity_empty_history():
    model = ModelSpec.build([0.2, 0.7], np.ones((2, 2)), 1.0)
    empty = EventStream([], [], 2, 0.0)
    assert np.array_equal(eval_intensity(model, empty, 3.0), [0.2, 0.7])


def test_intensity_single_event_hawkes():
    model = ModelSpec.build([1.0], [[0.5]], 2.0)
    h = EventStream([1.0], [0], 1)
    assert eval_intensity(model, h, 1.7)[0] == pytest.approx(1 + 0.5 * math.exp(-2 * 0.7), rel=1e-15)


def test_intensity_table1_model_with_decay(d):
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = A[2, 1] = 1.5
    model = ModelSpec.build(np.zeros(3), A, 0.5, ScalarDecay(d))
    h = EventStream([0.5], [1], 3)
    t = 22.0
    dt = 1 / (22.0**2.4 - 926.7)
    expect = [1.5 * dt * math.exp(-0.5 * 21.5), 0.0, 1.5 * dt * math.exp(-0.5 * 21.5)]
    assert np.allclose(eval_intensity(model, h, t), expect, rtol=1e-13, atol=0)


def test_intensity_requires_past_history():
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    with pytest.raises(PreconditionError):
        eval_intensity(model, EventStream([1.0], [0], 1), 1.0)


def test_intensity_matches_classical_hawkes(rng):
    m = 3
    worst = 0.0
    for _ in range(100):
        mu = rng.uniform(0, 1, m)
        A = rng.uniform(0, 1, (m, m))
        beta = rng.uniform(0.2, 3, (m, m))
        times, nodes = random_history(rng, m, int(rng.integers(0, 30)))
        model = ModelSpec.build(mu, A, beta)
        t = 10.5
        got = eval_intensity(model, EventStream(times, nodes, m, 10.0), t)
        ref = hawkes_intensity(mu, A, beta, times.tolist(), nodes.tolist(), t)
        assert np.all(got >= mu)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    assert worst < 1e-12


def test_matrix_multiplier_intensity():
    half = DecaySpec.constant(0.5)
    one = DecaySpec.constant(1.0)
    alpha = MatrixFunction(((half, one), (one, half)))
    model = ModelSpec.build([0.0, 0.0], np.ones((2, 2)), 1.0, alpha)
    lam = eval_intensity(model, EventStream([0.0], [0], 2), 1.0)
    assert np.allclose(lam, [0.5 * math.exp(-1), math.exp(-1)], rtol=1e-15)


# --- compensator -----------------------------------------------------------


def test_compensator_empty():
    model = ModelSpec.build([0.3, 0.4], np.ones((2, 2)), 1.0)
    assert np.allclose(compensator(model, EventStream([], [], 2, 0.0), 5.0), [1.5, 2.0])


def test_compensator_modes_agree_for_constant():
    model = ModelSpec.build([0.5], [[0.8]], 1.5)
    h = EventStream([1.0, 2.5], [0, 0], 1, 4.0)
    expect = 0.5 * 4 + 0.8 / 1.5 * ((1 - math.exp(-1.5 * 3)) + (1 - math.exp(-1.5 * 1.5)))
    assert compensator(model, h, 4.0, "paper")[0] == pytest.approx(expect, rel=1e-14)
    assert compensator(model, h, 4.0, "exact")[0] == pytest.approx(expect, rel=1e-10)


def test_compensator_decay_modes_differ(d):
    model = ModelSpec.build([0.0], [[1.0]], 0.5, ScalarDecay(d))
    h = EventStream([5.0], [0], 1, 30.0)
    paper = compensator(model, h, 30.0, "paper")[0]
    exact = compensator(model, h, 30.0, "exact")[0]
    assert paper == pytest.approx(d(30.0) / 0.5 * (1 - math.exp(-0.5 * 25)), rel=1e-14)
    assert exact > paper
    assert exact <= d(5.0) * 1.0 / 0.5
    # brute-force trapezoid of d(s) exp(-0.5 (s - 5)) over [5, 30]
    s = np.linspace(5.0, 30.0, 2_000_001)
    f = d(s) * np.exp(-0.5 * (s - 5.0))
    ref = float(np.sum((f[1:] + f[:-1]) * 0.5 * np.diff(s)))
    assert exact == pytest.approx(ref, abs=1e-8)


def test_compensator_exact_nondecreasing(d):
    model = ModelSpec.build([0.1], [[2.0]], 0.5, ScalarDecay(d))
    h = EventStream([1.0, 4.0, 18.0], [0, 0, 0], 1, 40.0)
    vals = [compensator(model, h, t, "exact")[0] for t in np.linspace(0, 40, 81)]
    assert np.all(np.diff(vals) >= 0)


def test_compensator_negative_time():
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    with pytest.raises(DomainError):
        compensator(model, EventStream([], [], 1, 0.0), -1.0)


def test_constant_multiplier_validation():
    with pytest.raises(ConfigError):
        Constant(-1.0)
