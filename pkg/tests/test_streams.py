from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fastslow.streams import PURPOSE_NOISE, Stream, master_key, stream_state


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 3))
def test_raw_output_matches_numpy_philox(seed, index, purpose):
    key = master_key(seed)
    ref = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=[0, 0, index, purpose])
    expected = ref.random_raw(9).astype(np.uint64)
    got = Stream(seed, index, purpose).raw(9)
    assert np.array_equal(got, expected)


def test_streams_are_pure_functions_of_seed_and_index():
    a = Stream(7, 3).normals(100)
    b = Stream(7, 3).normals(100)
    c = Stream(7, 4).normals(100)
    d = Stream(7, 3, PURPOSE_NOISE).normals(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_master_seed_range():
    with pytest.raises(ValueError):
        master_key(-1)
    with pytest.raises(ValueError):
        master_key(2**64)


def test_uniforms_in_unit_interval_and_uniform():
    s = Stream(1, 0)
    u = np.array([s.random() for _ in range(20_000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_normals_ks():
    z = Stream(2, 0).normals(200_000)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_gamma_and_poisson_means():
    s = Stream(3, 0)
    g = np.array([s.gamma(0.7) for _ in range(50_000)])
    assert abs(g.mean() - 0.7) < 4 * np.sqrt(0.7 / len(g))
    assert stats.kstest(g, stats.gamma(0.7).cdf).pvalue > 1e-3
    for mean in (0.3, 4.0, 60.0):
        p = np.array([s.poisson(mean) for _ in range(20_000)])
        assert abs(p.mean() - mean) < 4 * np.sqrt(mean / len(p))


def test_exponential():
    s = Stream(4, 0)
    e = np.array([s.exponential() for _ in range(50_000)])
    assert stats.kstest(e, "expon").pvalue > 1e-3


def test_stream_state_rejects_foreign_generators():
    with pytest.raises(TypeError):
        stream_state(np.random.default_rng(0))
