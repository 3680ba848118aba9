import numpy as np
import pytest

from zipmix.errors import DomainError
from zipmix.model import ExposureGrid, ModelParams
from zipmix.simulate import SimConfig, replicate_stream, simulate_dataset


def _cfg(**kw):
    g = ExposureGrid(np.array([0.5, 1.0, 2.0]), 50)
    base = dict(grid=g, params=ModelParams(0.3, 0.7, 2.0, 6.0), seed=11, replicates=3)
    base.update(kw)
    return SimConfig(**base)


def test_same_seed_same_data():
    a = simulate_dataset(_cfg(), 1)
    b = simulate_dataset(_cfg(), 1)
    assert np.array_equal(a.n, b.n) and np.array_equal(a.y, b.y)


def test_replicates_are_independent_streams():
    ds = list(replicate_stream(_cfg()))
    assert len(ds) == 3
    assert not np.array_equal(ds[0].n, ds[1].n)
    assert np.array_equal(ds[2].m, simulate_dataset(_cfg(), 2).m)


def test_n_is_z_times_m():
    d = simulate_dataset(_cfg())
    assert np.array_equal(d.n, d.z * d.m)


def test_eps_one_means_no_inflation():
    d = simulate_dataset(_cfg(params=ModelParams(0.3, 1.0, 2.0, 6.0)))
    assert d.z.all() and np.array_equal(d.n, d.m)


def test_pi_zero_gives_all_common():
    d = simulate_dataset(_cfg(params=ModelParams(0.0, 0.7, 2.0, 6.0)))
    assert not d.y.any()


def test_bad_config():
    with pytest.raises(DomainError):
        _cfg(params=ModelParams(0.3, 1.2, 2.0, 6.0))
    with pytest.raises(DomainError):
        _cfg(replicates=0)


def test_moments_match_model():
    g = ExposureGrid(np.array([0.5, 1.5]), 4000)
    p = ModelParams(0.3, 0.8, 2.0, 6.0)
    d = simulate_dataset(SimConfig(g, p, seed=5))
    assert abs(d.y.mean() - 0.3) < 4 * np.sqrt(0.3 * 0.7 / 4000)
    assert abs(d.z.mean() - 0.8) < 4 * np.sqrt(0.8 * 0.2 / 8000)
    # E[N_ij] = eps t_i (pi mu + (1 - pi) nu)
    expect = 0.8 * g.t * (0.3 * 2 + 0.7 * 6)
    sd = np.sqrt(d.n.var(axis=1) / 4000)
    assert np.all(np.abs(d.n.mean(axis=1) - expect) < 4 * sd)
