"""The compiled and pure-Python kernels must produce identical output."""

import numpy as np
import pytest

from eahawkes import HAVE_COMPILED, ModelSpec, ScalarDecay, epidemic_control_decay, use_backend
from eahawkes import _backend, _pykernels
from eahawkes.simulate import SimConfig, simulate_branching, simulate_thinning
from eahawkes.theory import cluster_length_cdf

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled extension not built")


def _both(fn):
    out = []
    for name in ("python", "compiled"):
        prev = use_backend(name)
        try:
            out.append(fn())
        finally:
            use_backend(prev)
    return out


def _model():
    A = np.array([[60.0, 8.0], [10.0, 45.0]])
    return ModelSpec.build([0.2, 0.1], A, [[0.5, 0.7], [0.9, 0.5]], ScalarDecay(epidemic_control_decay()))


@needs_compiled
def test_thinning_identical():
    cfg = SimConfig(_model(), 40.0, ((0.3, 0), (0.6, 1)), rng_seed=7)
    with pytest.warns(RuntimeWarning):
        py, c = _both(lambda: simulate_thinning(cfg))
    assert len(py) > 100
    assert np.array_equal(py.times, c.times)
    assert np.array_equal(py.nodes, c.nodes)
    assert np.array_equal(py.seed, c.seed)


@needs_compiled
def test_branching_identical():
    cfg = SimConfig(_model(), 40.0, ((0.3, 0),), rng_seed=11)
    py, c = _both(lambda: simulate_branching(cfg, allow_unstable=True)[0])
    assert len(py) > 100
    assert np.array_equal(py.times, c.times)
    assert np.array_equal(py.nodes, c.nodes)


@needs_compiled
def test_excitation_identical(rng):
    times = np.cumsum(rng.exponential(0.1, 500))
    nodes = rng.integers(0, 3, 500)
    beta = rng.uniform(0.3, 2.0, (3, 3))
    py, c = _both(lambda: _backend.kernels.excitation_at_events(times, nodes, beta, 3))
    assert np.array_equal(py, c)


@needs_compiled
def test_picard_sweep_close():
    model = ModelSpec.build([1.0], [[0.02]], 1.0, ScalarDecay(epidemic_control_decay()))
    py, c = _both(lambda: cluster_length_cdf(model, t_max=2.0, y_max=4.0, h_t=0.1, h_y=0.1))
    assert py.iterations == c.iterations
    # summation order differs between the vectorized and the loop version
    assert np.max(np.abs(py.d_values - c.d_values)) < 1e-13


@needs_compiled
def test_decay_tables_agree():
    from eahawkes import _kernels

    spec = epidemic_control_decay()
    t = np.linspace(0, 80, 8001)
    table = spec.table()
    ref = np.array([_pykernels.decay_value(x, _pykernels._as_table(table)) for x in t])
    assert np.array_equal(_kernels.decay_values(t, table), ref)
    assert np.allclose(ref, spec(t), rtol=1e-15, atol=0)
    assert _kernels.envelope_factor(table) == _pykernels.envelope_factor(_pykernels._as_table(table))


def test_use_backend_roundtrip():
    prev = use_backend("python")
    assert _backend.current() == "python"
    assert _backend.kernels is _pykernels
    use_backend(prev)
    assert _backend.current() == prev
    with pytest.raises(ValueError):
        use_backend("fortran")


def test_uniform_stream_blocks():
    rng_a = np.random.default_rng(3)
    stream = _pykernels.UniformStream(rng_a)
    draws = [stream.next() for _ in range(2 * _pykernels.BLOCK + 5)]
    rng_b = np.random.default_rng(3)
    ref = np.concatenate([rng_b.random(_pykernels.BLOCK) for _ in range(3)])[: len(draws)]
    assert np.array_equal(draws, ref)
