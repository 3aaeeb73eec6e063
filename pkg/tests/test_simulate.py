import math

import numpy as np
import pytest
from scipy import stats

from eahawkes import Constant, EventStream, ModelSpec, ScalarDecay, epidemic_control_decay
from eahawkes.errors import ConfigError, ExplosionError, PreconditionError
from eahawkes.experiments import TABLE1_SEEDS, table1_model
from eahawkes.simulate import (
    SimConfig,
    bin_events,
    branching_raw,
    simulate_branching,
    simulate_replicates,
    simulate_thinning,
)
from eahawkes.theory import mean_first_generation


def _counts(streams, m):
    return np.array([np.bincount(s.nodes[~s.seed], minlength=m) for s in streams])


def test_config_validation():
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    with pytest.raises(ConfigError):
        SimConfig(model, 0.0)
    with pytest.raises(ConfigError):
        SimConfig(model, 5.0, ((6.0, 0),))
    with pytest.raises(ConfigError):
        SimConfig(model, 5.0, ((1.0, 3),))


def test_poisson_when_no_excitation(backend):
    model = ModelSpec.build([1.0, 1.0], np.zeros((2, 2)), 1.0)
    cfg = SimConfig(model, 20.0, rng_seed=1)
    for method in ("thinning", "branching"):
        c = _counts(simulate_replicates(cfg, 1000, method), 2)
        mean, se = c.mean(axis=0), c.std(axis=0, ddof=1) / math.sqrt(len(c))
        assert np.all(np.abs(mean - 20.0) < 3 * se)


def test_hawkes_mean_count(backend):
    # E N(T) from an empty start: mu T / (1 - n) - mu n / ((1 - n)^2 beta) (1 - exp(-(beta - A) T)), n = A/beta
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    T = 100.0
    expect = 200.0 - 2.0 * (1 - math.exp(-50.0))
    c = _counts(simulate_replicates(SimConfig(model, T, rng_seed=5), 1000), 1)[:, 0]
    se = c.std(ddof=1) / math.sqrt(len(c))
    assert abs(c.mean() - expect) < 3 * se


def test_table1_setup_counts():
    with pytest.warns(RuntimeWarning):
        s = simulate_thinning(SimConfig(table1_model(0), 8.0, TABLE1_SEEDS, rng_seed=0))
    counts = np.bincount(s.nodes, minlength=3)
    assert np.all(counts > 6)
    assert s.seed.sum() == 6
    # coincident seeds are nudged apart by the tie rule
    assert np.allclose(np.sort(s.times[s.seed]), np.sort([t for t, _ in TABLE1_SEEDS]), atol=1e-7)


def test_determinism(backend):
    model = ModelSpec.build([0.5, 0.2], [[0.3, 0.2], [0.1, 0.4]], 1.0, ScalarDecay(epidemic_control_decay()))
    cfg = SimConfig(model, 50.0, ((1.0, 0),), rng_seed=99)
    a, b = simulate_thinning(cfg), simulate_thinning(cfg)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.nodes, b.nodes)
    a, b = simulate_branching(cfg)[0], simulate_branching(cfg)[0]
    assert np.array_equal(a.times, b.times) and np.array_equal(a.nodes, b.nodes)


def test_branching_without_excitation_is_immigrants():
    model = ModelSpec.build([2.0], [[0.0]], 1.0)
    stream, trees = simulate_branching(SimConfig(model, 30.0, rng_seed=3))
    assert len(trees) == len(stream)
    assert all(t.size() == 1 for t in trees)
    assert np.array_equal(np.sort([t.time for t in trees]), stream.times)


def test_cluster_trees_cover_stream():
    model = ModelSpec.build([0.5, 0.5], [[0.3, 0.2], [0.2, 0.3]], 1.0)
    stream, trees = simulate_branching(SimConfig(model, 40.0, ((0.5, 1),), rng_seed=8))
    events = sorted(e for t in trees for e in t.events())
    assert len(events) == len(stream)
    assert np.allclose([e[0] for e in events], stream.times, atol=1e-6)
    for tree in trees:
        stack = [tree]
        while stack:
            node = stack.pop()
            assert all(c.time > node.time for c in node.children)
            stack.extend(node.children)
    assert sum(t.is_seed for t in trees) == 1


def test_first_generation_poisson_hawkes():
    model = ModelSpec.build([0.0], [[0.5]], 1.0)
    rng = np.random.default_rng(4)
    n = 10_000
    times, nodes, parents, _ = branching_raw(model, 1e4, np.zeros(n), np.zeros(n, dtype=np.int64), rng)
    kids = np.bincount(parents[parents >= 0], minlength=n)[:n]
    assert abs(kids.mean() - 0.5) < 3 * math.sqrt(0.5 / n)
    # chi-square goodness of fit against Poisson(0.5), last cell pooled
    k_max = 4
    obs = np.array([np.sum(kids == k) for k in range(k_max)] + [np.sum(kids >= k_max)])
    p = stats.poisson.pmf(np.arange(k_max), 0.5)
    exp = n * np.append(p, 1 - p.sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_first_generation_mean_with_decay(backend):
    model = ModelSpec.build([0.0], [[40.0]], 0.5, ScalarDecay(epidemic_control_decay()))
    u = 9.0
    m_u = mean_first_generation(model, u)
    n = 10_000
    rng = np.random.default_rng(17)
    root_t = np.full(n, u)
    _, _, parents, _ = branching_raw(model.with_branching([[40.0]]), u + 200.0, root_t, np.zeros(n, dtype=np.int64), rng, 10**7)
    kids = np.bincount(parents[parents >= 0], minlength=n)[:n]
    assert abs(kids.mean() - m_u) < 3 * math.sqrt(m_u / n)


def test_mean_cluster_size_bound():
    model = ModelSpec.build([0.0], [[0.6]], 1.0)
    n = 5000
    rng = np.random.default_rng(2)
    _, _, parents, _ = branching_raw(model, 1e4, np.zeros(n), np.zeros(n, dtype=np.int64), rng)
    root = np.arange(len(parents))
    for k in range(n, len(parents)):
        root[k] = root[parents[k]]
    sizes = np.bincount(root, minlength=n)[:n]
    se = sizes.std(ddof=1) / math.sqrt(n)
    assert sizes.mean() <= 1 / (1 - 0.6) + 3 * se


def test_unstable_thinning_warns_and_explodes(backend):
    model = ModelSpec.build([1.0], [[1.5]], 1.0)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ExplosionError):
            simulate_thinning(SimConfig(model, 100.0, rng_seed=0), max_events=5000)


def test_unstable_branching_needs_override():
    model = ModelSpec.build([1.0], [[1.5]], 1.0)
    cfg = SimConfig(model, 100.0, rng_seed=0)
    with pytest.raises(ConfigError):
        simulate_branching(cfg)
    with pytest.raises(ExplosionError):
        simulate_branching(cfg, allow_unstable=True, max_events=5000)


def test_matrix_multiplier_simulators_agree():
    from eahawkes import DecaySpec, MatrixFunction

    d = epidemic_control_decay()
    one = DecaySpec.constant(1.0)
    alpha = MatrixFunction(((one, d), (d, one)))
    model = ModelSpec.build([0.4, 0.4], [[0.4, 10.0], [10.0, 0.3]], 1.0, alpha)
    cfg = SimConfig(model, 20.0, rng_seed=50)
    a = _counts(simulate_replicates(cfg, 500, "thinning"), 2)
    b = _counts(simulate_replicates(cfg, 500, "branching"), 2)
    se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 4 * se)


def test_bin_events_examples():
    s = EventStream([0.05, 0.15], [0, 0], 1, 0.2)
    b = bin_events(s, 0.1)
    assert b.counts[:, 0].tolist() == [1, 1]
    empty = bin_events(EventStream([], [], 2, 1.0), 0.25)
    assert empty.counts.shape == (4, 2) and not empty.counts.any()
    seeds = EventStream.from_events([(t, v) for t, v in TABLE1_SEEDS], 3, 8.0)
    b = bin_events(seeds, 0.1)
    for v in range(3):
        assert np.flatnonzero(b.counts[:, v]).tolist() == [2, 5]
    assert b.counts.sum() == len(seeds)


def test_bin_events_conserves_and_marks_seeds():
    s = EventStream([0.1, 0.3, 0.30000001, 0.9], [0, 1, 0, 1], 2, 1.0, seed=[True, False, False, False])
    b = bin_events(s, 0.3)
    assert b.counts.sum() == 4
    assert b.seed_counts.sum() == 1 and b.seed_counts[0, 0] == 1
    with pytest.raises(PreconditionError):
        bin_events(s, 0.0)


def test_thinning_constant_multiplier_scales_excitation():
    # alpha = 0.5 with A = 1 behaves like alpha = 1 with A = 0.5
    a = ModelSpec.build([1.0], [[1.0]], 1.0, Constant(0.5))
    b = ModelSpec.build([1.0], [[0.5]], 1.0)
    ca = _counts(simulate_replicates(SimConfig(a, 50.0, rng_seed=0), 400), 1)[:, 0]
    cb = _counts(simulate_replicates(SimConfig(b, 50.0, rng_seed=10_000), 400), 1)[:, 0]
    se = math.sqrt(ca.var(ddof=1) / 400 + cb.var(ddof=1) / 400)
    assert abs(ca.mean() - cb.mean()) < 4 * se
